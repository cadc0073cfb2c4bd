"""JSON schemas for collection files and CLI run reports."""

import json
from importlib import resources

COLLECTION_FILE = "collection_file.schema.json"
RUN_REPORT = "run_report.schema.json"


def load_schema(name: str) -> dict:
    return json.loads(resources.files(__name__).joinpath(name).read_text(encoding="utf-8"))
