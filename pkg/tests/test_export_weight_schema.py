"""Tests for scripts/export_weight_schema.py."""

import json
from unittest.mock import patch

from scripts.export_weight_schema import build_schema, main


def test_schema_covers_all_architectures():
    schema = build_schema()
    assert schema["title"] == "ncm-fe weight file"
    text = json.dumps(schema)
    for name in ("MicnnFile", "CannFile", "IckanFile"):
        assert name in text
    assert schema["discriminator"]["propertyName"] == "architecture"


def test_main_writes_file(tmp_path, capsys):
    out = tmp_path / "schema" / "weights.json"
    with patch("sys.argv", ["export_weight_schema", str(out)]):
        main()
    assert json.loads(out.read_text(encoding="utf-8"))["title"] == "ncm-fe weight file"
    assert "Exported weight-file schema" in capsys.readouterr().out
