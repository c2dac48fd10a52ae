#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Created on Tue Sep 15 14:12:50 2026

Procedural H&E / IHC slide pairs with HER2 labels, and reading/writing of
paired image directories (synthetic output or real datasets such as BCI and
MIST).
"""
import os
import re
import warnings
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import pandas as pd
import scipy.ndimage as ndi
from skimage import io
from skimage.color import hed2rgb
from skimage.draw import ellipse
from skimage.filters import gaussian
from skimage.transform import resize
from skimage.util import img_as_float

from DISTAIN.Misc import DataError, RangeError, image_to_uint8


HER2_LEVELS = ('0', '1+', '2+', '3+')
BCI_LEVEL_COUNTS = (38, 235, 446, 258)
TEST_OFFSET = 1000000

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.tif', '.tiff', '.bmp')
LEVEL_PATTERN = re.compile(r'_(?:test|train|val)_(0|1\+|2\+|3\+)$')

# Stain concentrations (hed2rgb units). Membrane DAB and ring completeness
# increase with the HER2 level.
HE_HEMATOXYLIN = 0.08
HE_EOSIN = 0.012
HE_FIBER_EOSIN = 0.02
IHC_HEMATOXYLIN = 0.045
MEMBRANE_DAB = (0.0, 0.03, 0.06, 0.09)
RING_COMPLETENESS = (0.0, 0.35, 0.7, 1.0)
WHITE_LEVEL = 0.97
NOISE_SIGMA = 0.004


@dataclass
class GeneratorSpec:
    image_size: int = 64
    nuclei_count_range: Tuple[int, int] = (6, 14)
    background_fraction: float = 0.5
    misalignment_px: float = 0.0
    seed: int = 0
    compression_factor: int = 8
    label_distribution: str = 'uniform'

    def __post_init__(self):
        self.nuclei_count_range = tuple(self.nuclei_count_range)
        lo, hi = self.nuclei_count_range

        if not 0.2 <= self.background_fraction <= 0.8:
            raise RangeError("'background_fraction' must lie in [0.2, 0.8], "
                             "got %g." % self.background_fraction)
        if self.image_size % self.compression_factor != 0:
            raise RangeError("'image_size' (%d) must be divisible by the "
                             "compression factor (%d)."
                             % (self.image_size, self.compression_factor))
        if not 0 <= lo <= hi:
            raise RangeError("'nuclei_count_range' must satisfy 0 <= min <= "
                             "max, got %s." % (self.nuclei_count_range,))
        if self.misalignment_px < 0:
            raise RangeError("'misalignment_px' must be non-negative.")
        if self.label_distribution not in ('uniform', 'bci'):
            raise RangeError("'label_distribution' must be 'uniform' or "
                             "'bci', got '%s'." % self.label_distribution)

    def level_probabilities(self):
        if self.label_distribution == 'uniform':
            return np.full(4, 0.25)
        counts = np.array(BCI_LEVEL_COUNTS, dtype=np.float64)

        return counts/counts.sum()


@dataclass
class SlidePair:
    he: np.ndarray
    ihc: np.ndarray
    label: str
    id: str
    nuclei: List[Tuple[float, float]] = field(default_factory=list)


def _normalise(x):
    x = x - x.min()
    top = x.max()

    return x/top if top > 0 else x


def _to_image(concentrations, rng):
    '''
    H x W x 3 stain concentrations -> RGB in [-1, 1] with acquisition noise.
    '''

    rgb = hed2rgb(concentrations)*WHITE_LEVEL
    rgb = np.clip(rgb + rng.normal(0.0, NOISE_SIGMA, rgb.shape), 0.0, 1.0)

    return 2.0*rgb - 1.0


def generate_pair(spec, rng, pair_id='pair', label=None):
    '''
    Generate one H&E / IHC pair sharing the same tissue geometry.

    The H&E image has hematoxylin-stained nuclei on eosin-stained fibrous
    tissue over a white background. The IHC image has the same nuclei in a
    lighter counterstain and brown (DAB) membrane rings whose intensity and
    completeness grow with the HER2 level. With misalignment_px > 0 the IHC
    image is warped by a smooth random displacement field of that amplitude,
    drawn after everything else.

    Parameters
    ----------
    spec : GeneratorSpec
        Generator settings.
    rng : numpy.random.Generator
        Random source; the pair is a deterministic function of its state.
    pair_id : str, optional
        Identifier. The default is 'pair'.
    label : str, optional
        Force a HER2 level instead of drawing one. The default is None.

    Returns
    -------
    SlidePair

    '''

    S = spec.image_size
    level = rng.choice(4, p=spec.level_probabilities())
    if label is not None:
        level = HER2_LEVELS.index(label)

    # Tissue occupies the top (1 - background_fraction) of a smooth field.
    blob = gaussian(rng.normal(size=(S, S)), sigma=S/8.0)
    tissue = blob > np.quantile(blob, spec.background_fraction)
    tissue_soft = gaussian(tissue.astype(np.float64), sigma=1.0)

    fibers = gaussian(rng.normal(size=(S, S)), sigma=(0.8, S/16.0))
    fibers = ndi.rotate(fibers, rng.uniform(0.0, 180.0), reshape=False,
                        mode='reflect')
    fibers = _normalise(fibers)

    nuclei = np.zeros((S, S))
    membrane = np.zeros((S, S))
    centres = []

    lo, hi = spec.nuclei_count_range
    count = rng.integers(lo, hi + 1)
    candidates = np.flatnonzero(tissue)
    for _ in range(count):
        idx = rng.choice(candidates) if len(candidates) else rng.integers(S*S)
        cy, cx = np.unravel_index(idx, (S, S))
        r = S/32.0*rng.uniform(1.4, 2.4)
        aspect = rng.uniform(0.7, 1.0)
        rotation = rng.uniform(-np.pi, np.pi)
        arc_start = rng.uniform(-np.pi, np.pi)
        jitter = rng.uniform(0.85, 1.15)

        rr, cc = ellipse(cy, cx, r, r*aspect, shape=(S, S), rotation=rotation)
        nuclei[rr, cc] = 1.0

        ring_r, ring_c = ellipse(cy, cx, 1.5*r + 1.0, 1.5*r*aspect + 1.0,
                                 shape=(S, S), rotation=rotation)
        angle = np.mod(np.arctan2(ring_r - cy, ring_c - cx) - arc_start,
                       2.0*np.pi)
        keep = angle < 2.0*np.pi*RING_COMPLETENESS[level]
        membrane[ring_r[keep], ring_c[keep]] = np.maximum(
            membrane[ring_r[keep], ring_c[keep]], jitter)

        centres.append((float(cy), float(cx)))

    membrane[nuclei > 0] = 0.0
    nuclei = gaussian(nuclei, sigma=0.7)
    membrane = gaussian(membrane, sigma=0.6)

    he_conc = np.stack([HE_HEMATOXYLIN*nuclei + 0.006*tissue_soft,
                        (HE_EOSIN + HE_FIBER_EOSIN*fibers)*tissue_soft,
                        np.zeros((S, S))], axis=-1)
    ihc_conc = np.stack([IHC_HEMATOXYLIN*nuclei + 0.004*tissue_soft,
                         0.002*tissue_soft,
                         MEMBRANE_DAB[level]*(membrane + 0.1*tissue_soft)],
                        axis=-1)

    he = _to_image(he_conc, rng)
    ihc = _to_image(ihc_conc, rng)

    if spec.misalignment_px > 0:
        ihc = _warp(ihc, spec.misalignment_px, rng)

    return SlidePair(he=he, ihc=ihc, label=HER2_LEVELS[level], id=pair_id,
                     nuclei=centres)


def _warp(img, amplitude, rng):
    S = img.shape[0]
    shifts = []
    for _ in range(2):
        d = gaussian(rng.normal(size=img.shape[:2]), sigma=S/8.0)
        shifts.append(amplitude*d/max(np.abs(d).max(), 1e-12))

    yy, xx = np.meshgrid(np.arange(img.shape[0]), np.arange(img.shape[1]),
                         indexing='ij')
    coords = [yy + shifts[0], xx + shifts[1]]
    out = np.stack([ndi.map_coordinates(img[..., k], coords, order=1,
                                        mode='reflect')
                    for k in range(img.shape[-1])], axis=-1)

    return np.clip(out, -1.0, 1.0)


def generate_dataset(spec, count, offset=0, display_progress=False):
    '''
    Pairs offset, ..., offset + count - 1. Pair i is drawn from
    numpy.random.default_rng([spec.seed, i]), so any pair can be regenerated
    on its own and disjoint offset ranges never share a pair.
    '''

    pairs = []
    for i in range(offset, offset + count):
        rng = np.random.default_rng([spec.seed, i])
        pairs.append(generate_pair(spec, rng, 'syn_%07d' % i))

        if display_progress and (i - offset) % 100 == 0:
            print('generated %d/%d pairs' % (i - offset + 1, count))

    return pairs


def split_offsets(n_train, n_test):
    '''
    Offset ranges of the train and test splits, {'train': (offset, count),
    'test': (offset, count)}. The test split starts at TEST_OFFSET.
    '''

    if n_train > TEST_OFFSET:
        raise RangeError("At most %d training pairs are supported."
                         % TEST_OFFSET)

    return {'train': (0, n_train), 'test': (TEST_OFFSET, n_test)}


def write_pairs_dir(pairs, out_dir, auto_override=False):
    '''
    Write pairs as PNG files to out_dir/he and out_dir/ihc, and their labels
    to out_dir/labels.csv.

    Parameters
    ----------
    pairs : list of SlidePair
        Pairs to write.
    out_dir : str
        Output directory.
    auto_override : bool, optional
        If False and out_dir already holds a dataset a DataError is raised.
        The default is False.

    Returns
    -------
    None.

    '''

    labels_path = os.path.join(out_dir, 'labels.csv')
    if os.path.exists(labels_path) and not auto_override:
        raise DataError("Directory '%s' already holds a dataset. Use "
                        "auto_override to overwrite it." % out_dir)

    for sub in ('he', 'ihc'):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    for pair in pairs:
        io.imsave(os.path.join(out_dir, 'he', pair.id + '.png'),
                  image_to_uint8(pair.he), check_contrast=False)
        io.imsave(os.path.join(out_dir, 'ihc', pair.id + '.png'),
                  image_to_uint8(pair.ihc), check_contrast=False)

    pd.DataFrame({'id': [p.id for p in pairs],
                  'label': [p.label for p in pairs]}).to_csv(labels_path,
                                                             index=False)

    return None


def label_from_name(stem, table=None):
    '''
    HER2 level from a BCI style name ('00052_test_3+'), else from 'table'
    (id -> label), else 'unlabeled'.
    '''

    match = LEVEL_PATTERN.search(stem)
    if match:
        return match.group(1)
    if table is not None and stem in table:
        return table[stem]

    return 'unlabeled'


def read_image(path, image_size=None):
    '''
    Read an image as RGB in [-1, 1], optionally resized (bilinear) to
    image_size x image_size.
    '''

    img = img_as_float(io.imread(path))
    if img.ndim == 2:
        img = np.stack([img]*3, axis=-1)
    img = img[..., :3]

    if image_size is not None and img.shape[:2] != (image_size, image_size):
        img = resize(img, (image_size, image_size), order=1,
                     anti_aliasing=False)

    return np.clip(2.0*img - 1.0, -1.0, 1.0)


def list_images(directory):
    return {os.path.splitext(name)[0]: name
            for name in sorted(os.listdir(directory))
            if name.lower().endswith(IMAGE_EXTENSIONS)}


def load_paired_dir(he_dir, ihc_dir, image_size=None, labels_file=None):
    '''
    Load same-named H&E / IHC image pairs.

    Parameters
    ----------
    he_dir & ihc_dir : str
        Directories of source and target images, matched by file stem.
    image_size : int, optional
        Resize (bilinear) to this size. The default is None (no resize).
    labels_file : str, optional
        CSV with columns id,label. The default is labels.csv next to he_dir,
        when present.

    Returns
    -------
    list of SlidePair
        Pairs sorted by id. Unmatched and unreadable files are skipped with
        a warning.

    '''

    he_files = list_images(he_dir)
    ihc_files = list_images(ihc_dir)

    for stem in sorted(set(he_files) ^ set(ihc_files)):
        warnings.warn("Skipping unmatched file '%s'."
                      % he_files.get(stem, ihc_files.get(stem)))

    common = sorted(set(he_files) & set(ihc_files))
    if not common:
        raise DataError("No matching image names in '%s' and '%s'."
                        % (he_dir, ihc_dir))

    if labels_file is None:
        default = os.path.join(os.path.dirname(os.path.normpath(he_dir)),
                               'labels.csv')
        labels_file = default if os.path.exists(default) else None

    table = None
    if labels_file is not None:
        frame = pd.read_csv(labels_file, dtype=str)
        table = dict(zip(frame['id'], frame['label']))

    pairs = []
    for stem in common:
        try:
            he = read_image(os.path.join(he_dir, he_files[stem]), image_size)
            ihc = read_image(os.path.join(ihc_dir, ihc_files[stem]),
                             image_size)
        except (OSError, ValueError) as err:
            warnings.warn("Skipping unreadable pair '%s': %s" % (stem, err))
            continue

        if he.shape != ihc.shape:
            warnings.warn("Skipping pair '%s' with sizes %s and %s."
                          % (stem, he.shape, ihc.shape))
            continue

        pairs.append(SlidePair(he=he, ihc=ihc,
                               label=label_from_name(stem, table), id=stem))

    if not pairs:
        raise DataError("None of the matched pairs in '%s' could be read."
                        % he_dir)

    return pairs
