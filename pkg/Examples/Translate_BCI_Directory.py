#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Thu Sep 24 15:47:10 2026

Translate a directory of real H&E patches (e.g. the BCI test split, whose
file names carry the HER2 level) with a trained checkpoint and evaluate the
result against the matching IHC patches.

Paths are resolved against $DISTAIN_DATA_ROOT when it is set.
"""
import os

from DISTAIN.CommandLine import main
from DISTAIN.RunConfig import resolve_data_path


checkpoint = "Runs/toy/last.zip"
he_dir = resolve_data_path("BCI_dataset/HE/test")
ihc_dir = resolve_data_path("BCI_dataset/IHC/test")
output_dir = "Runs/toy/bci_test"


main(['translate', '--checkpoint', checkpoint, '--input', he_dir,
      '--output', os.path.join(output_dir, 'generated'),
      '--guidance-scale', '3.0', '--steps', '100', '--use-ema'])

main(['evaluate', '--generated', os.path.join(output_dir, 'generated'),
      '--truth', ihc_dir, '--image-size', '64',
      '--output', output_dir])
