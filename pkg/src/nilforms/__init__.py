"""Bigraded complexes, adiabatic Laplacians and the Rumin complex on Heisenberg nilmanifolds."""

__version__ = "0.1.0"

from .exterior import (
    BiDegree,
    PointForm,
    d21_pointwise,
    hodge_star,
    interior,
    lefschetz_L,
    wedge,
)
from .models import (
    FormField,
    FrameSpec,
    InvariantModel,
    ModeGrid,
    build_invariant_model,
    build_mode_grid,
    embed_invariant,
    frame_derivative,
)
from .operators import (
    EpsilonFamily,
    OperatorCache,
    OperatorHandle,
    assemble_components,
    build_d_eps,
    build_laplacian,
    build_Q,
    estimate_diagnostics,
    sobolev_norms,
    theta_rescale,
)
from .rumin import (
    RuminBasis,
    RuminComplex,
    build_rumin_spaces,
    d_R,
    d_xi,
    invariant_betti,
    lefschetz_split,
    middle_operator,
)
from .spectral import (
    EigenPair,
    RateFit,
    SweepRecord,
    eigensolve,
    fit_rates,
    limit_vs_rumin,
    operator_order_fit,
    spectral_sequence_report,
    sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
