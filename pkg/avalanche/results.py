"""Result records: serialization to JSON lines / CSV and the on-disk run store."""
import csv
import io
import json
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import List, Optional, TextIO

SCHEMA_VERSION = 1
RESULTS_DIR = os.getenv('AVALANCHE_RESULTS_DIR', 'results')
RUN_ID_PATTERN = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass
class ResultRecord:
    subcommand: str
    parameters: dict
    seed: int
    payload: List[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION
    run_id: Optional[str] = None
    created: Optional[str] = None

    def header(self) -> dict:
        data = asdict(self)
        data.pop('payload')
        data['rows'] = len(self.payload)
        return data

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'ResultRecord':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def replay_key(self) -> str:
        """Everything that determines the payload (timing and ids excluded)."""
        return json.dumps({'subcommand': self.subcommand, 'parameters': self.parameters, 'seed': self.seed},
                          sort_keys=True)


def _json_default(value):
    if hasattr(value, 'item'):
        return value.item()
    if hasattr(value, 'tolist'):
        return value.tolist()
    return str(value)


def dumps(data) -> str:
    return json.dumps(data, default=_json_default)


def write_jsonl(record: ResultRecord, stream: TextIO):
    stream.write(dumps(record.header()) + '\n')
    for row in record.payload:
        stream.write(dumps(row) + '\n')


def write_csv(record: ResultRecord, stream: TextIO):
    header = record.header()
    for key in ('schema_version', 'subcommand', 'seed', 'parameters', 'summary', 'warnings'):
        stream.write(f'# {key}={dumps(header[key])}\n')
    if not record.payload:
        return
    columns = list(record.payload[0].keys())
    for row in record.payload[1:]:
        columns.extend(k for k in row if k not in columns)
    writer = csv.DictWriter(stream, fieldnames=columns, lineterminator='\n')
    writer.writeheader()
    for row in record.payload:
        writer.writerow({k: (dumps(v) if isinstance(v, (list, dict)) else v) for k, v in row.items()})


WRITERS = {'jsonl': write_jsonl, 'csv': write_csv}


def render(record: ResultRecord, fmt: str = 'jsonl') -> str:
    buffer = io.StringIO()
    WRITERS[fmt](record, buffer)
    return buffer.getvalue()


def emit(record: ResultRecord, out: Optional[str] = None, fmt: str = 'jsonl'):
    """Write ``record`` to ``out`` (stdout when omitted)."""
    if out in (None, '-'):
        WRITERS[fmt](record, sys.stdout)
        return
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out, 'w', newline='') as f:
        WRITERS[fmt](record, f)


def read_jsonl(stream: TextIO) -> ResultRecord:
    lines = [line for line in stream.read().splitlines() if line.strip()]
    header = json.loads(lines[0])
    header.pop('rows', None)
    record = ResultRecord.from_dict(header)
    record.payload = [json.loads(line) for line in lines[1:]]
    return record


class RunStore:
    """Directory of stored records, one JSON file per run."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = directory or RESULTS_DIR

    def _path(self, run_id: str) -> str:
        if not RUN_ID_PATTERN.match(run_id) or run_id.startswith('.'):
            raise ValueError(f'invalid run id {run_id!r}')
        return os.path.join(self.directory, f'{run_id}.json')

    def new_id(self, subcommand: str) -> str:
        base = f'{subcommand}-{int(time.time() * 1000)}'
        run_id, n = base, 1
        while os.path.exists(self._path(run_id)):
            run_id, n = f'{base}-{n}', n + 1
        return run_id

    def save(self, record: ResultRecord) -> str:
        record.run_id = record.run_id or self.new_id(record.subcommand)
        record.created = record.created or datetime.now().isoformat()
        try:
            os.makedirs(self.directory, exist_ok=True)
            with open(self._path(record.run_id), 'w') as f:
                f.write(dumps(record.to_dict()))
        except Exception as e:
            print(f"[STORE] Error saving {record.run_id}: {e}", file=sys.stderr)
            raise
        return record.run_id

    def load(self, run_id: str) -> Optional[ResultRecord]:
        path = self._path(run_id)
        if not os.path.exists(path):
            return None
        try:
            with open(path, 'r') as f:
                return ResultRecord.from_dict(json.load(f))
        except Exception as e:
            print(f"[STORE] Error loading {run_id}: {e}", file=sys.stderr)
            return None

    def list_runs(self) -> List[dict]:
        """Headers of every stored run, oldest first."""
        runs = []
        if not os.path.isdir(self.directory):
            return runs
        for name in sorted(os.listdir(self.directory)):
            run_id = name[:-len('.json')]
            if not name.endswith('.json') or not RUN_ID_PATTERN.match(run_id) or run_id.startswith('.'):
                continue
            record = self.load(run_id)
            if record is not None:
                runs.append(record.header())
        runs.sort(key=lambda r: r.get('created') or '')
        return runs

    def delete(self, run_id: str) -> bool:
        path = self._path(run_id)
        if os.path.exists(path):
            os.remove(path)
            return True
        return False
