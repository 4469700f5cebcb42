"""Conditional density modelling of one tabular variable given the others.

The target is rank-normalized onto [0, 1], its conditional density is
expanded in orthonormal polynomials, and each expansion coefficient is a
least-squares linear function of features of the remaining variables.  The
predicted density at the actual value scores a record's credibility.
"""

__version__ = "0.1.0"

from .basis import DiscreteBasis, basis_matrix, build_discrete_basis, eval_basis, gauss_legendre
from .calibration import CalibrationSpec
from .dataset import (Dataset, DatasetSchema, GeneratorConfig, VariableSpec, generate_synthetic,
                      load_schema, parse_csv, write_csv)
from .density import (DensityPolynomial, calibrate, flag_records, flag_threshold, loglik_bits,
                      original_scale_density, predict_density, predict_moments, raw_score,
                      score_dataset)
from .edf import NormalizedColumn, inverse_quantile, normalize, transform_new
from .evaluation import EvalParams, evaluate, greedy_order, importance, novelty, relevance
from .features import FeatureLayout, build_design_matrix, build_layout, featurize_row
from .hcr import (PairwiseDensity, conditional_by_substitution, density_grid,
                  estimate_coefficient, fit_pairwise)
from .regression import (TrainedModel, build_targets, load_model, save_model, solve_min_norm,
                         train)
