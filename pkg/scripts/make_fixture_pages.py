#!/usr/bin/env python3
"""Regenerate every bundled fixture under fixtures/.

Artifacts (all deterministic functions of the seeds below):
  fixtures/pages/page*.html   20 synthetic biography pages, seed 7
  fixtures/gold.conll         true labels for every sentence of those pages
  fixtures/train.conll        noisy pipeline annotations over 80 pages (seed 11)
  fixtures/test.conll         gold entity-bearing sentences over 60 pages (seed 13)
"""

import argparse
from pathlib import Path

from pii_forge import experiments, synthbio
from pii_forge.corpus import write_conll

BUNDLED_PAGES = 20
BUNDLED_SEED = 7


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixtures", default=Path(__file__).resolve().parents[1] / "fixtures")
    args = parser.parse_args()

    root = Path(args.fixtures)
    pages_dir = root / "pages"
    pages_dir.mkdir(parents=True, exist_ok=True)

    pages = synthbio.generate_pages(BUNDLED_PAGES, BUNDLED_SEED)
    for page in pages:
        (pages_dir / f"{page.page_id}.html").write_text(page.html, encoding="utf-8")
    write_conll(synthbio.gold_corpus(pages, "fixture-gold"), root / "gold.conll")
    print(f"wrote {len(pages)} pages and gold.conll")

    train, test = experiments.fixture_corpora()
    write_conll(train, root / "train.conll")
    write_conll(test, root / "test.conll")
    print(f"wrote train.conll ({len(train)} sentences) and test.conll ({len(test)} sentences)")


if __name__ == "__main__":
    main()
