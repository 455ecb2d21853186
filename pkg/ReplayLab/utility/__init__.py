from .errors import (
    ReplayLabError, InvalidArgumentError, ConfigError, ProtocolError,
    HypothesisViolationError, bug, BUG_TAG, INFO_TAG
)
from .streams import UniformStream, make_rng, seed_sequence, phase_stream
from .utils import (
    to_jsonable, canonical_json, hash_text, hash_json, hash_file, hash_arrays,
    flatten_json
)
