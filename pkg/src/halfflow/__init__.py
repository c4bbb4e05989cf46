"""Pseudo-spectral simulation of the half-harmonic gradient flow of circle maps into spheres."""

from .spectral import (CircleGrid, LineGrid, Field, SpectralField, frac_laplacian,
                       pv_half_laplacian, half_energy, heat_semigroup, poisson_kernel,
                       sobolev_norm, to_spectral, from_spectral)
from .fraccalc import (OffDiagKernel, Calibration, calibrate, d_s, divergence,
                       sq_grad_density, shatah_current, divfree_correction, wente_check)
from .initial import InitialDataSpec, make_initial
from .flow import FlowConfig, ThresholdConfig, FlowTrace, run_flow, picard_slab
from .bubbling import concentration_scan, rescale_extract, bubble_residual, glue_continue
from .variational import minimize, epsilon_sweep, diagnostics_ire

__version__ = "0.1.0"
