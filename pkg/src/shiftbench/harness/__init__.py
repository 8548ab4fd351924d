from .config import CONFIG_VERSION, DEFAULTS, load_config, validate_config
from .pipeline import RunLedger, canonical_json, hash_file, run_experiment
from .report import build_report, emit_report, read_runs_csv
