IR_VERSION = "ir-v1"
IR_SCHEMA_FILE = "ir-v1.json"

DEFAULT_ITERATION_CAP = 1000
DEFAULT_PROFILE = "full"

PROFILE_ENV = "FIXQL_PROFILE"
HOME_ENV = "FIXQL_HOME"

RECURSIVE_ALIAS_PREFIX = "recursive_"
ROW_ALIAS_PREFIX = "v"

CORPUS_MANIFEST = "manifest.json"
CORPUS_QUERIES_DIR = "queries"
CORPUS_DATA_DIR = "data"

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_VIOLATION = 2
EXIT_UNSUPPORTED = 3
EXIT_NONTERMINATION = 4

BENCH_ORACLE_CAP = 200
