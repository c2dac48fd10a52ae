#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Thu Sep 24 09:12:48 2026

Compare the four conditioning modes and the four loss weightings on the
synthetic data, over several seeds.
"""
import matplotlib.pyplot as plt

from DISTAIN import load_config, run_ablation


config = load_config(overrides=['optimizer.steps=2000', 'guidance.steps=100'])
runs, summary = run_ablation(config, seeds=range(5),
                             output_dir="Runs/ablation")
print(summary.to_string(index=False))


# SCM of every run, one panel per group.
fig, axes = plt.subplots(1, 2, figsize=[10, 4])
for ax, (group, frame) in zip(axes, runs.groupby('group')):
    names = list(dict.fromkeys(frame['variant']))
    ax.boxplot([frame[frame['variant'] == v]['scm'] for v in names])
    ax.set_xticks(range(1, len(names) + 1), names, rotation=20)
    ax.set_title(group)
    ax.set_ylabel('SCM')

plt.show()
