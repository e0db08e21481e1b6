import json
import logging
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from utils.errors import ConfigError
from utils.utils import compute_hash

logger = logging.getLogger(__name__)

PACKAGE_VERSION = "1.0.0"
GENESIS_HASH = "0" * 64


def provenance_record(config_hash: str, seed: Optional[int], components: Optional[Dict[str, str]] = None,
                      **extra: Any) -> Dict[str, Any]:
    """The provenance block every CLI run embeds in its outputs."""
    record = {"config_hash": config_hash, "seed": seed, "components": components or {},
              "version": PACKAGE_VERSION}
    record.update(extra)
    return record


@dataclass
class RecordHeader:
    timestamp: float
    previous_hash: str
    index: int


@dataclass
class LedgerRecord:
    """One run: `info` names the subcommand, `payload` holds its provenance."""
    header: RecordHeader
    info: str
    payload: dict
    hash: Optional[str] = None

    def calculate_hash(self) -> str:
        return compute_hash({"header": asdict(self.header), "info": self.info, "payload": self.payload})

    def finalize(self) -> None:
        self.hash = self.calculate_hash()

    def to_dict(self) -> dict:
        return {"header": asdict(self.header), "info": self.info, "payload": self.payload, "hash": self.hash}

    @classmethod
    def from_dict(cls, data: dict) -> "LedgerRecord":
        return cls(header=RecordHeader(**data["header"]), info=data["info"], payload=data["payload"],
                   hash=data["hash"])


class ProvenanceLedger:
    """
    Append-only JSON file of hash-linked run records. Each record stores the
    hash of its predecessor, so editing any past record breaks the chain.
    """

    def __init__(self, ledger_file: str = "provenance/database/ledger.json"):
        self.ledger_file = Path(ledger_file)
        self.records: List[LedgerRecord] = []
        self.load()
        if not self.records:
            self._append("genesis", {})

    def load(self) -> None:
        if not self.ledger_file.exists():
            self.records = []
            return
        try:
            with open(self.ledger_file) as f:
                self.records = [LedgerRecord.from_dict(r) for r in json.load(f)]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ConfigError(f"provenance ledger {self.ledger_file} is corrupt: {e}") from e

    def save(self) -> None:
        self.ledger_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.ledger_file, "w") as f:
            json.dump([r.to_dict() for r in self.records], f, indent=2)

    def _append(self, info: str, payload: dict) -> LedgerRecord:
        previous = self.records[-1].hash if self.records else GENESIS_HASH
        record = LedgerRecord(
            header=RecordHeader(timestamp=datetime.now().timestamp(), previous_hash=previous,
                                index=len(self.records)),
            info=info,
            # round-trip through JSON so the hash matches what is stored
            payload=json.loads(json.dumps(payload, default=str)),
        )
        record.finalize()
        self.records.append(record)
        self.save()
        return record

    def append(self, payload: dict, info: str) -> LedgerRecord:
        record = self._append(info, payload)
        logger.info("provenance record %d (%s) hash=%s", record.header.index, info, record.hash[:12])
        return record

    def verify_chain(self) -> bool:
        for i, record in enumerate(self.records):
            expected_previous = self.records[i - 1].hash if i > 0 else GENESIS_HASH
            if record.header.previous_hash != expected_previous or record.hash != record.calculate_hash():
                return False
        return True

    def get(self, index: int) -> Optional[LedgerRecord]:
        return self.records[index] if 0 <= index < len(self.records) else None

    def history(self, config_hash: str) -> List[LedgerRecord]:
        """All runs recorded for one configuration."""
        return [r for r in self.records if r.payload.get("config_hash") == config_hash]
