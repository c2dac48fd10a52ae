#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Tue Sep 22 11:02:37 2026

Write a synthetic paired dataset with the BCI level distribution and a small
misalignment between H&E and IHC, then plot a few pairs.
"""
import os

from DISTAIN import GeneratorSpec, generate_dataset
from DISTAIN.Misc import plot_translations
from DISTAIN.SyntheticSlides import split_offsets, write_pairs_dir


output_dir = "Synthetic Data"
spec = GeneratorSpec(image_size=64, misalignment_px=1.5,
                     label_distribution='bci', seed=7)

for split, (offset, count) in split_offsets(400, 50).items():
    pairs = generate_dataset(spec, count, offset, display_progress=True)
    write_pairs_dir(pairs, os.path.join(output_dir, split),
                    auto_override=True)


# The IHC images are shown in the 'generated' column.
pairs = generate_dataset(spec, 4)
plot_translations([p.he for p in pairs], [p.ihc for p in pairs],
                  titles=['%s (%s)' % (p.id, p.label) for p in pairs])
