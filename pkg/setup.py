#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Mon Sep  7 10:01:40 2026
"""
from setuptools import setup

setup(name='DISTAIN',
      version='0.1.0',
      description="Virtual H&E to IHC staining with a dual-stream latent diffusion transformer, with structural-correlation evaluation and a synthetic slide generator.",
      license='GNU General Public License v3.0',
      packages=['DISTAIN'],
      python_requires='>=3.9',
      install_requires=['numpy', 'scipy', 'matplotlib', 'torch',
                        'scikit-image', 'pandas', 'omegaconf'],
      extras_require={'test': ['pytest']},
      entry_points={'console_scripts': [
          'distain=DISTAIN.CommandLine:main']})
