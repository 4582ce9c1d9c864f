"""Scalable distributed trie hashing.

An order-preserving key-value partitioning structure that grows one server
at a time: servers split overflowing buckets along digit-string bounds,
clients route through possibly stale trie images and are corrected by
image adjustments piggybacked on replies.  Ships with a deterministic
in-process simulator and an experiment harness.
"""

from .keyspace import (
    BOTTOM,
    TOP,
    Bound,
    Cmp,
    Interval,
    KeySpace,
    bound_compare,
    bound_order,
    common_prefix,
    interval_contains,
    key_le_bound,
)
from .trie import (
    GraftMismatchError,
    Internal,
    InvalidLocatorError,
    Leaf,
    LeafLocator,
    NilRejectedError,
    ParseError,
    SearchOutcome,
    SplitBoundError,
    Trie,
    TrieCorruptionError,
    TrieError,
    deserialize,
)
from .server import ServerNode, compute_split_string
from .client import Client
from .sim import (
    AllocationError,
    Coordinator,
    MetricsRow,
    SimConfig,
    SimStats,
    Simulation,
    SimulationError,
    parse_config,
    render_config,
)
from .harness import (
    LocalFile,
    WorkloadSpec,
    gen_workload,
    run_experiment,
    scenario_script,
    scenario_split_fixture,
    verify_against_oracle,
)

__version__ = "0.1.0"
