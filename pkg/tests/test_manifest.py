"""Keeps REPRO_MANIFEST.txt in sync with the test suite.

The manifest maps external reference material to the tests that pin each
behaviour. The checks here are mechanical: rows must be well formed, every
covered row must name test functions that exist, and every declared coverage
group must retain at least one covered row.
"""

import ast
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
MANIFEST = ROOT / "REPRO_MANIFEST.txt"

# Fields are separated by space-pipe-space so that "||" norm bars inside
# quote fields do not split the row.
SEPARATOR = " | "


def manifest_lines():
    return MANIFEST.read_text(encoding="utf-8").splitlines()


def parsed_rows():
    rows = []
    for number, line in enumerate(manifest_lines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [field.strip() for field in stripped.split(SEPARATOR)]
        assert len(fields) == 4, "line %d: expected 4 fields, got %d" % (number, len(fields))
        rows.append((number, fields[0], fields[1], fields[2], fields[3]))
    return rows


def coverage_groups():
    for line in manifest_lines():
        stripped = line.strip()
        if stripped.startswith("# coverage-groups:"):
            tail = stripped.split(":", 1)[1]
            return [group.strip() for group in tail.split(",") if group.strip()]
    raise AssertionError("manifest lacks a coverage-groups header")


def defined_functions(path):
    tree = ast.parse(path.read_text(encoding="utf-8"))
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            names.add(node.name)
    return names


def test_manifest_exists_and_has_rows():
    assert MANIFEST.is_file()
    rows = parsed_rows()
    assert len(rows) >= 30
    assert any(status == "covered" for _, _, _, _, status in rows)
    assert any(status.startswith("out-of-scope:") for _, _, _, _, status in rows)


def test_manifest_rows_well_formed():
    for number, ref, quote, test_id, status in parsed_rows():
        assert ref, "line %d: empty ref" % number
        assert quote.startswith('"') and quote.endswith('"') and len(quote) > 2, (
            "line %d: quote must be a nonempty double-quoted excerpt" % number
        )
        covered = status == "covered"
        out_of_scope = status.startswith("out-of-scope:") and len(status) > len("out-of-scope:")
        assert covered or out_of_scope, "line %d: bad status %r" % (number, status)
        if covered:
            assert test_id != "-", "line %d: covered row names no tests" % number
        else:
            assert test_id == "-", "line %d: out-of-scope row must use '-' for test-id" % number


def test_manifest_test_ids_exist():
    cache = {}
    checked = 0
    for number, _, _, test_id, status in parsed_rows():
        if status != "covered":
            continue
        for node_id in [part.strip() for part in test_id.split(",")]:
            assert node_id.count("::") == 1, "line %d: bad node id %r" % (number, node_id)
            rel_path, func = node_id.split("::")
            path = ROOT / rel_path
            assert path.is_file(), "line %d: missing file %s" % (number, rel_path)
            if rel_path not in cache:
                cache[rel_path] = defined_functions(path)
            assert func in cache[rel_path], (
                "line %d: %s is not defined in %s" % (number, func, rel_path)
            )
            checked += 1
    assert checked >= 50


def test_manifest_groups_all_covered():
    groups = coverage_groups()
    assert len(groups) >= 5
    covered_refs = [ref for _, ref, _, _, status in parsed_rows() if status == "covered"]
    for group in groups:
        tag = "[%s]" % group
        assert any(ref.startswith(tag) for ref in covered_refs), (
            "coverage group %s has no covered rows" % group
        )
