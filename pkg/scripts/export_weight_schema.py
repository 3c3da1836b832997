"""Export the JSON Schema of weight files to a static JSON file.

Usage:
    python -m scripts.export_weight_schema [output_path]

Defaults to docs/weight-schema.json if no path is given.
"""

import json
import sys
from pathlib import Path


def build_schema() -> dict:
    from pydantic import TypeAdapter

    from src.schemas import WeightFile

    schema = TypeAdapter(WeightFile).json_schema()
    schema["title"] = "ncm-fe weight file"
    return schema


def main() -> None:
    schema = build_schema()
    output = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("docs/weight-schema.json")
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    print(f"Exported weight-file schema to {output} ({output.stat().st_size:,} bytes)")


if __name__ == "__main__":
    main()
