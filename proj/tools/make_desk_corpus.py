#!/usr/bin/env python3
"""Build an offline English text corpus from docstrings of installed Python sources.

Each docstring longer than a minimum size becomes one paragraph-separated
document. Output is deterministic for a given set of installed files.
"""
import argparse
import ast
import pathlib
import re
import sys


def docstrings(path):
    try:
        tree = ast.parse(path.read_text(encoding="utf-8"))
    except (SyntaxError, UnicodeDecodeError, ValueError):
        return
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            doc = ast.get_docstring(node, clean=True)
            if doc:
                yield doc


def normalise(doc):
    # One document per docstring: internal blank lines would split it.
    lines = [ln.rstrip() for ln in doc.splitlines()]
    text = "\n".join(ln for ln in lines if ln.strip())
    return re.sub(r"[^\x09\x0a\x20-\x7e]", "", text)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", action="append", default=None, help="source tree to scan (repeatable)")
    ap.add_argument("--min-chars", type=int, default=200)
    ap.add_argument("--max-bytes", type=int, default=12_000_000)
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()
    roots = args.root or ["/usr/lib/python3.10", "/usr/local/lib/python3.10/dist-packages"]

    seen = set()
    total = 0
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", encoding="ascii") as out:
        for root in roots:
            for path in sorted(pathlib.Path(root).rglob("*.py")):
                for doc in docstrings(path):
                    text = normalise(doc)
                    if len(text) < args.min_chars or text in seen:
                        continue
                    seen.add(text)
                    out.write(text + "\n\n")
                    total += len(text) + 2
                    if total >= args.max_bytes:
                        print(f"{len(seen)} documents, {total} bytes", file=sys.stderr)
                        return
    print(f"{len(seen)} documents, {total} bytes", file=sys.stderr)


if __name__ == "__main__":
    main()
