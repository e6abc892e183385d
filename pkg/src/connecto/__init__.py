"""connecto: 20 classical ML pipelines for predicting follow-up brain
connectivity from a baseline connectome, plus the benchmarking protocol
(public/private scoring, k-fold CV, averaged-rank standings, paired
t-tests) used to compare them."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
from .connectome import (  # noqa: F401
    ConnectivityMatrix,
    FeatureTable,
    FeatureVector,
    LongitudinalDataset,
    devectorize,
    generate_synthetic,
    load_csv,
    triu_index,
    vectorize,
    write_csv,
)
from .pipeline import (  # noqa: F401
    FittedPipeline,
    LearnerSpec,
    PipelineConfig,
    StageSpec,
    fit_pipeline,
    load_config,
    load_team_config,
    save_config,
)
