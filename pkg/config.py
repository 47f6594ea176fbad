"""
Configuration settings for the cyclic max-flow reconstruction tools
"""

import math
from pathlib import Path

# Application settings
APP_NAME = "Cyclic Max-Flow Reconstruction"
APP_VERSION = "1.0.0"
APP_DESCRIPTION = "Reconstruct phase and hue images on a cyclic label topology with continuous max-flow"

# Binary field format
FIELD_MAGIC = b"CYFL"
FIELD_VERSION = 1
FIELD_KINDS = {
    'cyclic': 0,   # one value per (voxel, theta-bin)
    'spatial': 1,  # one value per voxel
    'flow': 2      # one value per (axis, voxel, theta-bin)
}
FIELD_DTYPE = '<f8'

# Discretization settings
DEFAULT_N_THETA = 32
MAX_SPATIAL_AXES = 3

# Data term settings
DEFAULT_DATA_POWER = 1
ALLOWED_DATA_POWERS = (1, 2)
DEFAULT_DATA_SCALE = 1.0
DEFAULT_SMOOTHNESS = 0.4

# Solver settings
SOLVERS = ('al', 'pf')
DEFAULT_SOLVER = 'al'

AL_DEFAULTS = {
    'c': 0.25,
    'tau': 0.1,
    'max_iters': 5000,
    'tolerance': 1e-3,   # mean |G|
    'log_every': 100,
    'c_anneal_factor': 1.0,
    'c_floor': 1e-3
}

PF_DEFAULTS = {
    'c': 1.0,
    'tau': 0.06,         # tau * ||grad||^2 < 1 up to three spatial axes
    'max_iters': 5000,
    'tolerance': 1e-6,   # max node |du|
    'log_every': 100,
    'c_anneal_factor': 1.0,  # 1.0 disables annealing
    'c_floor': 1e-3
}

# Floor applied to u before it is reused as the proximal center
PF_U_FLOOR = 1e-300

# Oracle settings
ORACLE_MAX_LABELINGS = 2 ** 24
ORACLE_CHUNK_LABELINGS = 2 ** 18

# Input settings
INPUT_KINDS = ('complex-pair', 'rgb', 'raw-field')
IMAGE_EXTENSIONS = ['.png', '.tif', '.tiff', '.bmp', '.pgm', '.ppm']

# Synthetic data settings
SYNTH_PATTERNS = ('two-phase', 'ramp', 'disk')
SYNTH_DEFAULTS = {
    'dims': (64, 64),
    'noise': 0.6,
    'seed': 0,
    'pattern': 'two-phase',
    'phase_a': 2.5,
    'phase_b': -2.0
}

# Visualization settings
PREVIEW_SETTINGS = {
    'levels': 256,
    'hue_saturation': 1.0,
    'hue_value': 1.0
}

# Report settings
REPORT_SETTINGS = {
    'default_font': 'Calibri',
    'default_font_size': 11,
    'image_width_inches': 5,
    'trace_rows': 10
}

# Environment
THREADS_ENV_VAR = "CYCLIC_FLOW_THREADS"

# Output file names used when only an output directory is given
OUTPUT_NAMES = {
    'labels': 'labels.cyf',
    'u': 'u.cyf',
    'trace': 'trace.csv',
    'preview': 'labels_preview.png'
}

# Paths
BASE_DIR = Path(__file__).parent

TWO_PI = 2.0 * math.pi
