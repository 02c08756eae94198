"""contamkit: statistical auditing of language models for benchmark
test-set contamination, via order-exchangeability tests on log-probability
queries."""

__version__ = "0.1.0"

from .datasets import (  # noqa: E402,F401
    Example,
    ExampleDataset,
    Permutation,
    ShardPlan,
    load_dataset,
    make_shard_plan,
    sample_permutation,
    save_dataset,
    seq,
)
from .errors import (  # noqa: F401
    AggregationError,
    ConfigError,
    ContamkitError,
    DatasetFormatError,
    ModelFormatError,
    OracleError,
    OracleSemanticError,
    OracleTransportError,
)
from .ngram import CanaryPlan, NGramModel, build_contaminated_corpus  # noqa: F401
from .oracles import LogProbOracle, NGramOracle, resolve_oracle  # noqa: F401
from .stats import (  # noqa: F401
    AggregateResult,
    TestConfig,
    TestResult,
    ecdf,
    filtered_aggregate,
    fisher_combine,
    ks_statistic,
    permutation_test,
    sharded_test,
)
from .special import chi2_sf, t_sf  # noqa: F401
from .strided import strided_log_likelihood  # noqa: F401
