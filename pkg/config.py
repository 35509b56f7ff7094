#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Central Configuration for Rotometry.

This module stores shared constants and numerical settings used across the
library modules and the command line front end. Tolerances, solver
thresholds, cutoffs and physical constants live here so that every module
reads them from one place; library functions take them as keyword defaults
and callers may override per call.

Centralizing these configurations makes them easier to manage and modify.
"""

import math

from scipy import constants as sc


# --- Tool Identity ---

TOOL_NAME = "rotometry"
TOOL_VERSION = "0.3.1"
THREADS_ENV_VAR = "ROTOMETRY_THREADS"
ERROR_PREFIX = "[Rotometry Error] "


# --- Basis Construction ---

# Largest number of Fock states we are willing to enumerate
DIMENSION_CAP = 2_000_000


# --- Tolerances ---

HERMITIAN_RTOL = 1e-12      # ||H - H^dagger||_max relative to ||H||_max
NORM_TOL = 1e-10            # pure state normalization
UNITARY_TOL = 1e-12         # mode rotation matrices
PSD_TOL = 1e-10             # density matrix eigenvalues and trace
DEGENERACY_TOL = 1e-10      # E1 - E0 below this is a true degeneracy
RESIDUAL_RTOL = 1e-10       # Krylov eigenpair residual relative to ||H||
SLD_FLOOR_RTOL = 1e-12      # lambda_i + lambda_j cutoff relative to trace
AMPLITUDE_CUTOFF = 1e-10    # sector truncation before mixed-state QFI
PHASE_TIE_RTOL = 1e-8       # amplitudes this close to the maximum count as ties


# --- Eigensolver ---

DENSE_THRESHOLD = 4096
KRYLOV_MAXITER = 20000
KRYLOV_NCV_MIN = 20


# --- Anti-crossing Search ---

COARSE_SCAN_POINTS = 41
GOLDEN_MAXITER = 200
DEFAULT_GAP_TOL = 1e-8


# --- Dynamics ---

MAX_PHASE_PER_STEP = 0.1    # radians of spectral spread * dt / hbar
ADIABATIC_FLOOR = 0.99
DEFAULT_RAMP_DURATION = 50.0
DEFAULT_QUENCH = 0.05
FFT_PAD_FACTOR = 8


# --- Metrology ---

DEFAULT_LOSS_GRID = (0.0, 0.5, 50)
FINITE_DIFFERENCE_STEP = 1e-5

RB87_MASS = 86.909180527 * sc.physical_constants["atomic mass constant"][0]
RB87_D2_WAVELENGTH = 780.241e-9
RB87_D2_ANGULAR_FREQUENCY = 2 * math.pi * sc.c / RB87_D2_WAVELENGTH


# --- Model Defaults ---

# Strong-coupling ring interaction quoted for five atoms, in units of E0
TG_INTERACTION_N5 = 1085 / (2 * math.pi)
TG_REFERENCE_ATOMS = 5
PANCAKE_EXTRA_MODES = 2     # default m_max = N + 2 and L_max = N + 2


# --- Output ---

FLOAT_FORMAT = ".12g"
UNIT_TAGS = {
    "three-site": "J",
    "pancake": "hbar*omega_xy",
    "ring": "E0",
}

# diskcache store lives in this subdirectory of --cache-dir; only it is ever recreated
SWEEP_CACHE_SUBDIR = "rotometry.cache"
