"""Frequency response of lasers with a dispersive intracavity medium."""

__version__ = "0.1.0"

from .dispersion import (  # noqa: E402
    SPEED_OF_LIGHT,
    CavityGeometry,
    MediumModel,
    PFExtrema,
    PullingFigure,
    ResonanceLine,
    epsilon_threshold,
    group_index,
    index_derivative,
    index_of_refraction,
    pf_extrema,
    pulling_factor,
)
from .solver import (  # noqa: E402
    ResonanceEquation,
    ResponseCurve,
    fold_points,
    pf_profile,
    solve_all_roots,
    sweep,
)
from .fitting import (  # noqa: E402
    FitReport,
    LorentzianParams,
    MeasurementSeries,
    fit_lorentzian,
    fit_polynomial5,
    local_pf,
    predict,
)
from .bootstrap import (  # noqa: E402
    BootstrapConfig,
    BootstrapReport,
    pf_max_lower_bound,
    smoothed_bootstrap,
)
