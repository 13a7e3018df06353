"""Query-specific subnetwork construction from an attributed object table.

The workflow: organize objects into a multi-dimensional data cube, embed
the cube's cells into a continuous space via word vectors, train a
Gaussian-policy actor-critic to pick query-relevant cells, and
materialize the induced network of the selection.  Reference strategies
(neighborhood growth, a link-count grower, random, greedy, and an
exhaustive oracle) share the same quality function and evaluation
counter, so their costs are directly comparable.
"""

from .baselines import (
    SelectionResult,
    cube_greedy,
    cube_random,
    exhaustive_oracle,
    max_disc_lite,
    no_cube_family,
    oracle_subset_count,
)
from .cube import (
    Cell,
    ConstructedNetwork,
    DataCube,
    DimensionSchema,
    LinkRecord,
    ObjectRecord,
    build_cube,
    induce_network,
    load_links,
    load_objects,
    load_query,
    materialize_network,
)
from .embedding import (
    CellEmbeddingTable,
    WordTable,
    build_embedding_table,
    embed_cell,
    embed_label,
    load_aliases,
    load_stopwords,
    load_word_table,
    nearest_cell,
    tokenize,
)
from .errors import (
    ConfigError,
    Cube2NetError,
    IngestionError,
    NoCandidatesError,
    NumericError,
    QueryError,
    SchemaError,
    UnknownCellError,
    WordTableError,
)
from .metrics import clustering_metrics, load_partition
from .pipeline import METHODS, MetricsReport, RunConfig, execute_method, run_pipeline
from .policy import (
    OptimizerState,
    PolicyParameters,
    actor_smoothness_bound,
    adam_step,
    critic_smoothness_bound,
    forward,
    gaussian_log_density,
    init_params,
    load_checkpoint,
    param_gradients,
    sample_action,
    save_checkpoint,
)
from .relevance import EvalCounter, SelectionQuality, relevance, step_reward
from .synth import SyntheticDataset, SyntheticSpec, generate_greedy_trap, generate_synthetic
from .trainer import (
    TrainConfig,
    TrainReport,
    Trajectory,
    Transition,
    compute_advantages,
    plan,
    ppo_iteration,
    rollout,
    train,
)

__version__ = "0.1.0"
