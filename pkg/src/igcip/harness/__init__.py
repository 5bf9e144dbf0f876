"""Validation harness: dataset groups, sensitivity studies, blinded ratings.

Ties the geometry, phantom, shape-model, localization and planner layers into
the end-to-end validation workflow: assemble specimen groups, run the three
sensitivity studies, compute their statistics, build blinded rating sets and
serve the rating API.
"""

from .dataset import (
    METHOD_MOMENTS,
    METHODS,
    Dataset,
    LocalizationPipelineParams,
    SpecimenData,
    auto_localize,
    generate_phantom_population,
    load_phantom_dir,
    prepare_dataset,
    save_phantom_dir,
    simulate_method_surface,
    simulate_method_surfaces,
    usable_for,
)
from .groups import (
    Groups,
    SpecimenRecord,
    assemble_groups,
    full_scale_manifest,
    load_manifest,
    save_manifest,
    uniform_manifest,
)
from .ratings import (
    ControlParams,
    RatingRecord,
    RatingSet,
    append_rating_record,
    blinded_payload,
    control_configuration,
    load_rating_records,
    load_rating_sets,
    make_rating_sets,
    rate_category,
    save_rating_sets,
    summarize_ratings,
)
from .server import make_app, serve
from .studies import (
    StudyCell,
    StudyParams,
    StudyReport,
    boxplot_csv,
    compute_study_stats,
    load_report,
    run_study,
    save_report,
    stats_csv,
)

__all__ = [
    "ControlParams",
    "Dataset",
    "Groups",
    "LocalizationPipelineParams",
    "METHODS",
    "METHOD_MOMENTS",
    "RatingRecord",
    "RatingSet",
    "SpecimenData",
    "SpecimenRecord",
    "StudyCell",
    "StudyParams",
    "StudyReport",
    "append_rating_record",
    "assemble_groups",
    "auto_localize",
    "blinded_payload",
    "boxplot_csv",
    "compute_study_stats",
    "control_configuration",
    "full_scale_manifest",
    "generate_phantom_population",
    "load_manifest",
    "load_phantom_dir",
    "load_rating_records",
    "load_rating_sets",
    "load_report",
    "make_app",
    "make_rating_sets",
    "prepare_dataset",
    "rate_category",
    "run_study",
    "save_manifest",
    "save_phantom_dir",
    "save_rating_sets",
    "save_report",
    "serve",
    "simulate_method_surface",
    "simulate_method_surfaces",
    "usable_for",
    "stats_csv",
    "summarize_ratings",
    "uniform_manifest",
]
