import json
import hashlib
from typing import Any, Dict, Iterable, Iterator, List
from ..utils import canonical_json, ConfigError

RECORD_TYPES = ('SETUP', 'SEND', 'DELIVER', 'ADVERSARY', 'KNOWLEDGE', 'OUTCOME', 'SNAPSHOT', 'END')


class Trace:
    """Ordered, line-delimited JSON record of one simulation run."""

    def __init__(self, records: Iterable[Dict[str, Any]] | None = None) -> None:
        self.records: List[Dict[str, Any]] = list(records or [])

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.records)

    def append(self, type_: str, **fields: Any) -> Dict[str, Any]:
        record = {'idx': len(self.records), 'type': type_, **fields}
        self.records.append(record)

        return record

    def of_type(self, *types: str) -> Iterator[Dict[str, Any]]:
        return (record for record in self.records if record['type'] in types)

    def outcomes(self, *events: str) -> Iterator[Dict[str, Any]]:
        return (record for record in self.records if record['type'] == 'OUTCOME' and record['event'] in events)

    @property
    def setup(self) -> Dict[str, Any]:
        return next(self.of_type('SETUP'))

    @property
    def status(self) -> str | None:
        end = next(self.of_type('END'), None)

        return end['status'] if end else None

    def lines(self) -> Iterator[str]:
        for record in self.records:
            yield canonical_json(record)

    def digest(self) -> str:
        sha = hashlib.sha256()
        for line in self.lines():
            sha.update(line.encode('utf-8'))
            sha.update(b'\n')

        return sha.hexdigest()

    def write(self, file_path: str) -> None:
        with open(file_path, 'w', encoding='utf-8') as file:
            for line in self.lines():
                file.write(line + '\n')

    @classmethod
    def load(cls, file_path: str) -> 'Trace':
        records = []
        try:
            with open(file_path, encoding='utf-8') as file:
                for number, line in enumerate(file, start=1):
                    if not line.strip():
                        continue
                    try:
                        records.append(json.loads(line))
                    except json.JSONDecodeError as err:
                        raise ConfigError(f'Cannot parse trace {file_path}.', [f'line {number}: {err.msg}']) from err
        except OSError as err:
            raise ConfigError(f'Cannot read trace {file_path}.', [str(err)]) from err

        if not records or records[0].get('type') != 'SETUP':
            raise ConfigError(f'Trace {file_path} does not start with a SETUP record.', ['line 1: expected SETUP'])

        return cls(records)
