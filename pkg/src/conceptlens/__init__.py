"""Concept-based explanations for text classifiers.

The pipeline has three parts: discover concepts by factorizing a
model's non-negative activations over class excerpts, rank the
concepts by their total contribution to the output variance under mask
perturbations, and attribute each concept back to the words or clauses
of individual excerpts by occlusion. Fidelity curves and
human-annotation alignment metrics evaluate the result.
"""

from .alignment import AlignmentResult, AspectAnnotation, label_excerpts, score_concepts
from .errors import (
    ConceptLensError,
    ConfigurationError,
    DataError,
    MatrixFormatError,
    NonNegativityViolation,
    PreconditionError,
    ProviderError,
)
from .excerpts import Excerpt, GranularitySpec, compatible, elements, extract, occlude
from .fidelity import FidelityCurve, compare_orderings, deletion_curve, insertion_curve
from .matrixio import nnls_solve, nnls_solve_batch, read_matrix, write_matrix
from .nmf import ConceptModel, fit, load_model, presence, save_model, transform
from .occlusion import AttributionBundle, ElementAttribution, attribute, bundle, concept_coefficient
from .provider import (
    CachedProvider,
    Provider,
    ProviderDescriptor,
    ToyModel,
    WireProvider,
    open_provider,
    train_toy,
)
from .sobol import (
    ImportanceReport,
    MaskDesign,
    estimate_total_indices,
    generate_design,
    jansen_total_indices,
    perturb,
)

__version__ = "0.1.0"
