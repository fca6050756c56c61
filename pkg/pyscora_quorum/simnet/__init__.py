from .trace import Trace, RECORD_TYPES
from .adversary import (
    AdversaryAction,
    AdversaryStrategy,
    AdversaryView,
    Corrupt,
    Delay,
    Deliver,
    Derivation,
    Drive,
    Inject,
    Knowledge,
    KnowledgeItem,
    Metadata,
    key_label,
    message_label,
    nonce_label,
    quorum_label,
    share_label,
)
from .strategies import STRATEGIES, build_strategy
from .network import NetworkContext, SimNetwork, build_network, run_scenario

__all__ = [
    'Trace',
    'RECORD_TYPES',
    'AdversaryAction',
    'AdversaryStrategy',
    'AdversaryView',
    'Corrupt',
    'Delay',
    'Deliver',
    'Derivation',
    'Drive',
    'Inject',
    'Knowledge',
    'KnowledgeItem',
    'Metadata',
    'key_label',
    'message_label',
    'nonce_label',
    'quorum_label',
    'share_label',
    'STRATEGIES',
    'build_strategy',
    'NetworkContext',
    'SimNetwork',
    'build_network',
    'run_scenario',
]
