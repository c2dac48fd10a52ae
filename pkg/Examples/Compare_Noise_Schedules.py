#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Tue Sep 22 09:40:18 2026

Compare the scaled-linear and linear noise schedules: signal-to-noise ratio
over the timesteps, and a synthetic IHC image noised at a few timesteps.
"""
import numpy as np
import matplotlib.pyplot as plt

from DISTAIN import GeneratorSpec, generate_dataset
from DISTAIN import make_scaled_linear, make_linear
from DISTAIN.NoiseSchedule import forward_diffuse


# Set schedule parameters.
T = 1000
beta_start = 1e-4
beta_end = 0.02

schedules = {'scaled linear': make_scaled_linear(T, beta_start, beta_end),
             'linear': make_linear(T, beta_start, beta_end)}


# Plot log SNR against timestep.
plt.figure(figsize=[5.8, 4.0], dpi=150)
for name, sched in schedules.items():
    plt.plot(np.arange(T), np.log10(sched.snr()), label=name)
plt.xlabel('t')
plt.ylabel(r'$\log_{10}$ SNR')
plt.legend()


# Noise one image in pixel space at a few timesteps.
img = generate_dataset(GeneratorSpec(), 1)[0].ihc
rng = np.random.default_rng(0)
eps = rng.normal(size=img.shape)
steps = [0, 100, 300, 600, 999]

fig, axes = plt.subplots(len(schedules), len(steps), figsize=[10, 4.4])
for row, (name, sched) in enumerate(schedules.items()):
    for col, t in enumerate(steps):
        x_t = forward_diffuse(img, t, eps, sched)
        axes[row, col].imshow(np.clip((x_t + 1)/2, 0, 1))
        axes[row, col].set_title('%s, t=%d' % (name, t), fontsize=7)
        axes[row, col].axis('off')

plt.show()
