import os

# COLORS AND OTHERS FOR LOGGING FORMAT
GREY = '\x1b[38;20m'
BLUE = '\x1b[34;1m'
YELLOW = '\x1b[33;20m'
RED = '\x1b[31;20m'
BOLD_RED = '\x1b[31;1m'
RESET = '\x1b[0m'

LOG_LEVEL_ENV = 'PYSCORA_QUORUM_LOG_LEVEL'
DEFAULT_LOG_LEVEL = os.environ.get(LOG_LEVEL_ENV, 'INFO')

# CRYPTO
DEFAULT_HASH_BYTES = 32
DEFAULT_NONCE_BITS = 128
SHAMIR_PRIME = 2**521 - 1
SHAMIR_CHUNK_BYTES = 64

# LEDGER TAGS
PAY_TAG = b'PAY'
SETTLE_TAG = b'SETTLE'
NONE_TAG = b'none'

# SELECTION
SELECTION_ITERATION_FACTOR = 64

# SIMULATION
DEFAULT_HORIZON = 100
DEFAULT_STEP_CAP = 2_000_000
DEFAULT_LATENCY = (1, 10)

# MONTE CARLO
DEFAULT_TRIALS = 10_000
EXACT_ORACLE_MAX_N = 30
CONFIDENCE_LEVEL = 0.95
GRIND_TAIL_LEVEL = 1e-3
DEFAULT_FLIP_RUNS = 100

# HARNESS EXIT CODES
EXIT_PASS = 0
EXIT_FAIL = 2
EXIT_INCONCLUSIVE = 3
