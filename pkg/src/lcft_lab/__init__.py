"""lcft-lab: numerical and symbolic laboratory for Liouville CFT on the sphere."""

__version__ = "0.1.0"

from .correlators import (
    InsertionConfig,
    MCConfig,
    CorrelationEstimate,
    estimate_correlation,
    kpz_check,
    validate_seiberg,
    weyl_transform,
)
from .errors import (
    ConfigError,
    EvaluationError,
    LcftError,
    NumericalDegeneracyError,
    PreconditionError,
    ResolutionError,
    RewriteError,
    SeibergError,
    UnsupportedExpressionError,
)
from .geometry import RoundMetric, SphereGrid, covariance
from .gff import FieldSample, GFFSampler, MollifierKernel, mollify
from .gmc import ChaosMeasure, GammaParam, chaos_measure, kahane_compare
from .bpz import SymbolicOperator, VirasoroWord, apply_to_rational, build_Dr
from .fusion import (
    FusionProbeConfig,
    RadialProcessConfig,
    fusion_scaling_probe,
    kahane_decoupling_check,
    predicted_slope,
    radial_band_report,
)
from .quadrature import (
    SingularIntegralSpec,
    ball_complement_integral,
    contour_quadrature,
    singular_grid,
)
from .rewrite import (
    DerivativeRequest,
    expand_derivative,
    reduce_insertion_kernel,
    symmetrize,
    term_group,
)
from .terms import (
    Term,
    TermList,
    check_absolutely_convergent,
    f_class_check,
    parse_term,
    parse_term_list,
    serialize_term,
    zeta,
)
from .term_eval import (
    TermEstimate,
    derivative_check,
    evaluate_term,
    evaluate_terms,
    finite_difference_derivative,
)
