"""kgemf: a composable knowledge-graph-embedding framework.

Interaction models, losses, training approaches, and inverse-relation
modeling combine freely; rank-based evaluation, hyper-parameter search, and
automatic batch-size selection are built in.
"""

from .graph import (
    DatasetSplits,
    TripleSet,
    Vocabulary,
    add_inverse_relations,
    parse_triples,
    random_split,
    serialize_triples,
)
from .models import (
    Gradients,
    ModelParams,
    init_model,
    load_checkpoint,
    regularize,
    save_checkpoint,
    score_all_heads,
    score_all_tails,
    score_grad,
    score_hrt,
)
from .losses import nssa_loss, pairwise_loss, pointwise_loss, setwise_ce
from .sampling import NegativeBatch, uniform_sample
from .training import (
    EarlyStopper,
    OptimizerState,
    TrainConfig,
    accumulate_sub_batches,
    optimizer_step,
    should_stop,
    train_lcwa,
    train_slcwa,
)
from .evaluation import (
    MetricReport,
    RankRecord,
    adjusted_mean_rank,
    auc_metrics,
    compute_rank,
    evaluate,
)
from .hpo import (
    Categorical,
    HpoConfig,
    IntRange,
    RealRange,
    SearchSpace,
    TrialRecord,
    final_retrain,
    grid_iter,
    random_sample,
    run_hpo,
)
from .amo import (
    MemoryBudget,
    MemoryModel,
    ProbeResult,
    analytic_probe,
    estimate_bytes,
    find_max_batch,
    find_max_sub_batch,
)
from .synthetic import ring_kg, ring_kg_tsv

__version__ = "0.1.0"
