"""
Schema loading and validation for screamkit inputs and outputs.

JSON files (configs, splits, reports, projections, model containers, stats)
are validated against JSON Schemas with the jsonschema library; CSV/TSV
tables (manifest, annotations, class tables) are validated against table
schemas with the frictionless library.
"""

###########
# IMPORTS #
###########

import json
import logging
from functools import cache
from importlib import resources
from pathlib import Path
from typing import Any

from frictionless import Dialect, Resource, formats, system, validate
from jsonschema.exceptions import SchemaError
from jsonschema.validators import validator_for

logger = logging.getLogger(__name__)

# Output layout: (subdirectory, glob, schema name)
OUTPUT_PATTERNS: list[tuple[str, str, str]] = [
    ("features", "features_*.jsonl", "feature_record"),
    ("splits", "split_*.json", "split"),
    ("models", "*.model.json", "model"),
    ("reports", "*_report.json", "eval_report"),
    ("reports", "summary.tsv", "report_summary"),
    ("projections", "projection_*.json", "projection"),
    ("stats", "dataset_stats.json", "dataset_stats"),
    ("stats", "class_table.tsv", "class_table"),
]


class SchemaValidationError(ValueError):
    """Raised when data does not conform to its schema.

    Attributes:
        messages: Human-readable error messages, each prefixed with the
            JSON path of the offending element.
    """

    def __init__(self, name: str, messages: list[str]) -> None:
        self.name = name
        self.messages = messages
        detail = "; ".join(messages[:5])
        more = f" (+{len(messages) - 5} more)" if len(messages) > 5 else ""
        super().__init__(f"Data does not match schema '{name}': {detail}{more}")


####################
# SCHEMA RESOURCES #
####################


def schema_path(name: str) -> Path:
    """Filesystem path of a bundled schema."""
    path = Path(str(resources.files(__name__) / f"{name}.schema.json"))
    if not path.exists():
        raise ValueError(f"Unknown schema: {name}")
    return path


@cache
def load_schema(name: str) -> dict[str, Any]:
    """Load and check a bundled schema by name (e.g. 'split')."""
    with open(schema_path(name)) as f:
        schema: dict[str, Any] = json.load(f)
    if _is_json_schema(schema):
        validator_for(schema).check_schema(schema)
    return schema


def _is_json_schema(schema: dict) -> bool:
    """Check whether a loaded schema dict is a JSON Schema (vs a table-schema)."""
    return "json-schema.org" in schema.get("$schema", "")


###################
# JSON VALIDATION #
###################


def json_errors(data: Any, name: str) -> list[str]:
    """Return '[path] message' strings for every schema violation in data."""
    schema = load_schema(name)
    validator = validator_for(schema)(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    messages = []
    for error in errors:
        path = (
            ".".join(str(p) for p in error.absolute_path)
            if error.absolute_path
            else "(root)"
        )
        messages.append(f"[{path}] {error.message}")
    return messages


def validate_json(data: Any, name: str) -> None:
    """Validate an in-memory JSON value.

    Raises:
        SchemaValidationError: if the data violates the schema.
    """
    messages = json_errors(data, name)
    if messages:
        raise SchemaValidationError(name, messages)


def validate_json_file(data_file: Path, name: str) -> tuple[bool, list[str]]:
    """
    Validate a JSON data file against a bundled JSON Schema.
    Args:
        data_file: Path to the JSON data file.
        name: Schema name.
    Returns:
        Tuple of (is_valid, list of error messages).
    """
    try:
        with open(data_file) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        return False, [f"Invalid JSON: {e}"]
    except OSError as e:
        return False, [f"Cannot read file: {e}"]
    try:
        messages = json_errors(data, name)
    except SchemaError as e:
        return False, [f"Invalid schema: {e}"]
    return not messages, messages


def validate_jsonl_file(data_file: Path, name: str) -> tuple[bool, list[str]]:
    """Validate every record of a JSON-Lines file; messages carry line numbers."""
    messages: list[str] = []
    try:
        with open(data_file) as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    messages.append(f"[line {line_number}] Invalid JSON: {e}")
                    continue
                messages.extend(
                    f"[line {line_number}] {m}" for m in json_errors(record, name)
                )
    except OSError as e:
        return False, [f"Cannot read file: {e}"]
    return not messages, messages


####################
# TABLE VALIDATION #
####################


def validate_table(
    data_file: Path, name: str, delimiter: str = ","
) -> tuple[bool, list[str]]:
    """
    Validate a delimited table against a bundled frictionless table schema.
    Args:
        data_file: Path to the CSV/TSV file.
        name: Schema name.
        delimiter: Field separator.
    Returns:
        Tuple of (is_valid, list of error messages).
    """
    dialect = Dialect(controls=[formats.CsvControl(delimiter=delimiter)])
    resource = Resource(
        path=str(Path(data_file).resolve()),
        schema=str(schema_path(name)),
        dialect=dialect,
        format="csv",
    )
    with system.use_context(trusted=True):
        report = validate(resource)
    if report.valid:
        return True, []
    errors = []
    for task in report.tasks:
        for error in task.errors:
            # Row/field context when available
            parts = []
            if hasattr(error, "row_number") and error.row_number:
                parts.append(f"row {error.row_number}")
            if hasattr(error, "field_name") and error.field_name:
                parts.append(f"field '{error.field_name}'")
            if parts:
                errors.append(f"[{', '.join(parts)}] {error.message}")
            else:
                errors.append(error.message)
    return False, errors


######################
# OUTPUT DIRECTORIES #
######################


def find_output_files(output_dir: Path) -> list[tuple[Path, str]]:
    """Pair every known output file under output_dir with its schema name."""
    found: list[tuple[Path, str]] = []
    for subdir, pattern, name in OUTPUT_PATTERNS:
        for path in sorted((output_dir / subdir).glob(pattern)):
            if path.is_file():
                found.append((path, name))
    return found


def validate_file(data_file: Path, name: str) -> tuple[bool, list[str]]:
    """Dispatch on file type: JSON, JSON-Lines or TSV table."""
    if data_file.suffix == ".jsonl":
        return validate_jsonl_file(data_file, name)
    if data_file.suffix == ".tsv":
        return validate_table(data_file, name, delimiter="\t")
    return validate_json_file(data_file, name)


def validate_outputs(output_dir: Path) -> int:
    """
    Validate all output files under output_dir that have matching schemas.
    Args:
        output_dir: Base output directory written by the screamkit subcommands.
    Returns:
        Exit code (0 when everything passed or nothing was found, 1 otherwise).
    """
    if not output_dir.exists():
        logger.error(f"Output directory does not exist: {output_dir}")
        return 1
    files_to_validate = find_output_files(output_dir)
    if not files_to_validate:
        logger.info("No files with matching schemas found.")
        return 0
    logger.info(f"Validating {len(files_to_validate)} file(s) with schemas...")
    all_passed = True
    for data_file, name in files_to_validate:
        is_valid, errors = validate_file(data_file, name)
        if is_valid:
            logger.info(f"  PASS: {data_file.relative_to(output_dir)}")
        else:
            logger.error(f"  FAIL: {data_file.relative_to(output_dir)}")
            for error in errors:
                logger.error(f"    - {error}")
            all_passed = False
    if all_passed:
        logger.info("All validations passed.")
        return 0
    logger.error("Some validations failed.")
    return 1
