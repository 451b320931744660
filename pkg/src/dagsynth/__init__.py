"""DAG-guided conditional generation of synthetic tabular data.

Train a generator whose structure follows a user-supplied variable graph,
feed chosen columns in as conditional inputs, then use the trained model to
debias datasets or to complete large low-detail tables with synthetic
high-detail columns.
"""

from .dag import Dag, GeneratorGraph, apply_conditional_inputs, build_graph, linearize, validate
from .discriminator import Critic, adversarial_losses, gradient_penalty, score
from .generator import DagGenerator, GeneratorDims, attention, init_params, make_noise, node_input
from .harness import (
    BiasRule,
    ControlTotals,
    aggregate_by_stratum,
    household_aggregate,
    inject_bias,
    run_debias_experiment,
    run_population_experiment,
)
from .metrics import (
    Binning,
    FrequencyList,
    MetricsReport,
    assess,
    frequency_list,
    js_distance,
    kl,
    ml_efficacy,
    srmse,
)
from .sampler import ChunkInstrument, complete, oversample_baseline, sample
from .schema import (
    CategoricalEncoder,
    ContinuousEncoder,
    DataTable,
    EncoderSet,
    TableSchema,
    VariableSpec,
    decode,
    encode,
    fit_encoders,
    ingest_csv,
)
from .trainer import (
    ModelCheckpoint,
    TrainingConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
