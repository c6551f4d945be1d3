"""Candidate detection and FROC/CPM evaluation toolkit for nodule CAD on CT."""

__version__ = "0.1.0"

from .combine import CandidateList, CombinationReport, combination_sweep, merge_candidates
from .detect import (
    Candidate,
    ShapeIndexParams,
    detect_large,
    detect_shape_index,
    detect_subsolid,
    resample_isotropic,
)
from .ensemble import (
    AlignedTable,
    PredictionSet,
    align_candidates,
    average_predictions,
    ensemble_sweep,
)
from .errors import FormatError, NodulekitError, ValidationError
from .filters import (
    DivergenceField,
    PrincipalCurvatureField,
    ShapeIndexField,
    divergence_of_normalized_gradient,
    principal_curvatures,
    shape_index,
)
from .froc import (
    CadMark,
    CpmReport,
    FrocCurve,
    HitAssignment,
    assign_hits,
    bootstrap_band,
    cap_marks,
    compare_systems,
    cpm,
    evaluate_marks,
    froc,
)
from .metaimage import read_metaimage, write_metaimage
from .phantom import (
    CylinderInsert,
    PhantomSpec,
    SphereInsert,
    generate_phantom,
    random_study_spec,
    read_phantom_spec,
)
from .reference import (
    IrrelevantFinding,
    ReaderAnnotation,
    ReferenceNodule,
    build_reference,
    merge_reader_annotations,
)
from .volume import Volume, WorldPoint

__all__ = [
    "AlignedTable",
    "CadMark",
    "Candidate",
    "CandidateList",
    "CombinationReport",
    "CpmReport",
    "CylinderInsert",
    "DivergenceField",
    "FormatError",
    "FrocCurve",
    "HitAssignment",
    "IrrelevantFinding",
    "NodulekitError",
    "PhantomSpec",
    "PredictionSet",
    "PrincipalCurvatureField",
    "ReaderAnnotation",
    "ReferenceNodule",
    "ShapeIndexField",
    "ShapeIndexParams",
    "SphereInsert",
    "ValidationError",
    "Volume",
    "WorldPoint",
    "align_candidates",
    "assign_hits",
    "average_predictions",
    "bootstrap_band",
    "build_reference",
    "cap_marks",
    "combination_sweep",
    "compare_systems",
    "cpm",
    "detect_large",
    "detect_shape_index",
    "detect_subsolid",
    "divergence_of_normalized_gradient",
    "ensemble_sweep",
    "evaluate_marks",
    "froc",
    "generate_phantom",
    "merge_candidates",
    "merge_reader_annotations",
    "principal_curvatures",
    "read_metaimage",
    "random_study_spec",
    "read_phantom_spec",
    "resample_isotropic",
    "shape_index",
    "write_metaimage",
]
