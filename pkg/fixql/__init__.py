import logging
import os
from importlib.metadata import version
from pathlib import Path

from fixql.configs import HOME_ENV

APP_NAME = "fixql"
__version__ = APP_VERSION = version(APP_NAME)

fixql_path = Path(os.environ.get(HOME_ENV, Path.home().joinpath("." + APP_NAME))).expanduser()
if not fixql_path.exists():
    fixql_path.mkdir(parents=True)

APP_HOME = str(fixql_path)
APP_LOG = str(fixql_path.joinpath(APP_NAME + ".log"))

logger_handler = logging.FileHandler(APP_LOG)
logger_handler.setFormatter(logging.Formatter("%(asctime)-15s %(levelname)-8s %(message)s"))

logger = logging.getLogger()
logger.addHandler(logger_handler)
logger.setLevel(logging.INFO)
logging.captureWarnings(True)
