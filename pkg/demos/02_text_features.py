"""The two stacker text features: average TF-IDF and QIEF counts.

QIEF (quantitative information element frequency) counts percentages,
population sizes, doses and standalone numbers; sections describing
outcomes and interventions are rich in exactly these.
"""

from piostack.features import (
    avg_tfidf,
    dump_qief_patterns,
    fit_tfidf,
    qief_features,
    tokenize,
)

documents = [
    "A total of 120 patients with hypertension were enrolled at two centers.",
    "The active group received 50 mg of metoprolol daily for eight weeks.",
    "Systolic pressure fell by 12% in the active arm and 3% under placebo.",
    "The study protocol was approved by the local ethics committee.",
]

# -- average TF-IDF -----------------------------------------------------------

corpus_tokens = [tokenize(d) for d in documents]
stats = fit_tfidf(corpus_tokens)
print(f"fitted TF-IDF stats: N={stats.doc_count}, vocabulary={len(stats.vocabulary)}")

print("\nper-document average TF-IDF (distinct-token mean of tf*idf):")
for doc, tokens in zip(documents, corpus_tokens):
    print(f"  {avg_tfidf(tokens, stats):.4f}  {doc[:60]}")

rare = "an unusual ultrarare zyzzogeton appeared in the cohort"
print(f"\nout-of-vocabulary tokens raise the score (rarity signal): "
      f"{avg_tfidf(tokenize(rare), stats):.4f}")

# -- QIEF detectors -----------------------------------------------------------

print("\nembedded detector patterns (also: piostack --dump-qief-patterns):")
print(dump_qief_patterns(), end="")

print("per-document QIEF counts (pct, pop, dose, num):")
for doc in documents:
    print(f"  {qief_features(doc).as_tuple()}  {doc[:60]}")
