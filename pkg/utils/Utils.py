import csv
import json
import os
import time
import traceback
from datetime import datetime, timezone

import numpy as np
import sentry_sdk

from harmonic.Errors import KerrflowError
from utils import Logging

TOOL_NAME = "kerrflow"
VERSION = "1.0.0"
TIME_UNITS = (("week", 604800), ("day", 86400), ("hour", 3600), ("minute", 60), ("second", 1))


def exit_code_for(exception):
    return getattr(exception, "exit_code", 1) if isinstance(exception, KerrflowError) else 1


def describe_options(options):
    if not options:
        return "none"
    return "\n".join(f"{name}: {value!r}" for name, value in options.items())


def log_exception(description, exception, command=None, **options):
    """Dumps a failure with its command options to the log and sentry; returns the error record for error.json."""
    record = {
        "error": description,
        "type": type(exception).__name__,
        "message": str(exception),
        "exit_code": exit_code_for(exception)
    }
    with sentry_sdk.push_scope() as scope:
        option_info = describe_options(options)
        sentry_sdk.add_breadcrumb(category='options', message=option_info, level='info')
        lines = [
            f"\n=============== {description} ===============",
            f"{record['type']}: {record['message']} (exit code {record['exit_code']})",
            "--------------- options ---------------",
            option_info,
            "--------------- traceback ---------------",
            "".join(traceback.format_tb(exception.__traceback__)).rstrip()
        ]
        if command is not None:
            lines.insert(2, f"command: {command}")
            scope.set_tag('command', command)
        Logging.error("\n".join(lines))

        scope.set_tag('error type', record["type"])
        sentry_sdk.capture_exception(exception)
    return record


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def format_number(x):
    """17 significant digits; None becomes an empty cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def save_to_disk(filename, data, ext="json", fields=None):
    """`fields` is the header row for csv; data rows are sequences in header order."""
    with open(f"{filename}.{ext}", "w", encoding="UTF-8", newline='') as file:
        if ext == 'json':
            json.dump(data, file, indent=4, skipkeys=True, sort_keys=True, default=_json_default)
        elif ext == 'csv':
            csvwriter = csv.writer(file, lineterminator="\n")
            csvwriter.writerow(fields)
            for row in data:
                csvwriter.writerow([format_number(x) for x in row])
        elif ext == 'jsonl':
            for row in data:
                file.write(json.dumps(row, sort_keys=True, default=_json_default) + "\n")


def output_path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """manifest.json of one run; the only output that carries timestamps."""

    def __init__(self, command, cfg_hash, seed):
        self.data = {
            "tool": TOOL_NAME,
            "version": VERSION,
            "command": command,
            "config_hash": cfg_hash,
            "seed": seed,
            "started": utc_now()
        }
        self._t0 = time.perf_counter()

    def finish(self, out_dir, status="ok"):
        elapsed = time.perf_counter() - self._t0
        self.data.update(finished=utc_now(), elapsed_seconds=round(elapsed, 3), status=status)
        save_to_disk(output_path(out_dir, "manifest"), self.data)
        Logging.info(f"{self.data['command']} finished in {to_pretty_time(elapsed) or 'under a second'}")
        return self.data


def to_pretty_time(seconds):
    parts = []
    for unit, size in TIME_UNITS:
        amount, seconds = divmod(seconds, size)
        if amount >= 1:
            amount = int(amount)
            parts.append(f"{amount} {unit}{'' if amount == 1 else 's'}")
    return ", ".join(parts)
