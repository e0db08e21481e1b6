import json

import pytest

from provenance.ledger import GENESIS_HASH, PACKAGE_VERSION, ProvenanceLedger, provenance_record
from utils.errors import ConfigError


@pytest.fixture
def ledger(tmp_path):
    return ProvenanceLedger(str(tmp_path / "ledger.json"))


def test_new_ledger_starts_with_genesis(ledger):
    assert len(ledger.records) == 1
    genesis = ledger.get(0)
    assert genesis.info == "genesis"
    assert genesis.header.previous_hash == GENESIS_HASH
    assert ledger.verify_chain()
    assert ledger.get(5) is None


def test_records_are_linked_and_persisted(ledger):
    first = ledger.append(provenance_record("cfg-a", 1, {"tracker": "oracle"}), "run")
    second = ledger.append(provenance_record("cfg-b", 2, scenes=3), "eval")
    assert first.header.previous_hash == ledger.get(0).hash
    assert second.header.previous_hash == first.hash
    assert second.payload["scenes"] == 3

    reloaded = ProvenanceLedger(str(ledger.ledger_file))
    assert [r.hash for r in reloaded.records] == [r.hash for r in ledger.records]
    assert reloaded.verify_chain()


def test_tampering_breaks_the_chain(ledger):
    ledger.append(provenance_record("cfg-a", 1), "run")
    ledger.append(provenance_record("cfg-a", 2), "run")
    data = json.loads(ledger.ledger_file.read_text())
    data[1]["payload"]["seed"] = 99
    ledger.ledger_file.write_text(json.dumps(data))
    assert not ProvenanceLedger(str(ledger.ledger_file)).verify_chain()


def test_history_filters_by_config(ledger):
    ledger.append(provenance_record("cfg-a", 1), "gen")
    ledger.append(provenance_record("cfg-b", 1), "gen")
    ledger.append(provenance_record("cfg-a", 2), "run")
    assert [r.info for r in ledger.history("cfg-a")] == ["gen", "run"]
    assert ledger.history("cfg-z") == []


def test_corrupt_ledger_is_a_config_error(tmp_path):
    path = tmp_path / "ledger.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="corrupt"):
        ProvenanceLedger(str(path))


def test_provenance_record_fields():
    record = provenance_record("abc", None, rounds=2)
    assert record == {"config_hash": "abc", "seed": None, "components": {}, "version": PACKAGE_VERSION,
                      "rounds": 2}
