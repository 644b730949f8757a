"""Regenerate src/riemopt/data/mammal_closure.tsv from a WordNet 3.0 corpus.

Needs nltk and a local copy of the WordNet corpus (LF line endings):

    python scripts/make_mammal_closure.py /path/to/corpora/wordnet out.tsv

Not a runtime dependency of the package.
"""

import sys

from nltk.corpus.reader.wordnet import WordNetCorpusReader


def closure_edges(wn):
    edges = set()
    for s in wn.all_synsets(pos="n"):
        for h in s.closure(lambda t: t.hypernyms()):
            edges.add((s.name(), h.name()))
        for inst in s.instance_hyponyms():
            for h in inst.closure(lambda t: t.instance_hypernyms()):
                edges.add((inst.name(), h.name()))
                for hh in h.closure(lambda t: t.hypernyms()):
                    edges.add((inst.name(), hh.name()))
    return edges


def main(corpus, out):
    wn = WordNetCorpusReader(corpus, None)
    root = wn.synset("mammal.n.01")
    nodes = {s.name() for s in root.closure(lambda t: t.hyponyms() + t.instance_hyponyms())}
    nodes.add(root.name())
    sub = sorted((a, b) for a, b in closure_edges(wn) if a in nodes and b in nodes)
    with open(out, "w", encoding="utf-8") as f:
        for a, b in sub:
            f.write(f"{a}\t{b}\n")
    n = len({a for a, _ in sub} | {b for _, b in sub})
    print(f"{n} nouns, {len(sub)} pairs -> {out}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
