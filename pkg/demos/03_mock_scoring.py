"""Score the toy corpus in memory with every estimator.

The mock provider grades a translation by character-trigram overlap with
a per-segment pseudo-reference, so the whole pipeline runs offline and
deterministically. Each chain score keeps the full step trace.
"""
from kpe import EstimatorKind, MockProvider, generate_toy_corpus, score_dataset
from kpe.backend import GenParams

toy = generate_toy_corpus()
provider = MockProvider(fixtures=toy.fixtures)
params = GenParams(model_id="mock-1")

for name in ("gemba", "prompt1_perplexity", "prompt2_token", "cot1", "cot2"):
    table = score_dataset(
        EstimatorKind(name=name), toy.dataset, provider, None, params=params
    )
    ordinals = [s.ordinal for s in table.scores.values() if s.ordinal is not None]
    mean = sum(ordinals) / len(ordinals)
    print(
        f"{name:20s} {table.n_parsed}/{table.total} parsed, "
        f"mean ordinal {mean:.2f}"
    )

print("\ntrace of one cot1 score:")
table = score_dataset(
    EstimatorKind(name="cot1"), toy.dataset, provider, None, params=params
)
score = next(iter(table.scores.values()))
print(f"  {score.lp} / {score.system_id} / {score.seg_id} -> ordinal {score.ordinal}")
for step in score.steps:
    print(f"    {step.template_id:22s} -> {step.parsed_class!r}")
