"""Sanity-check the sampled-negative protocol against known scorers.

A uniform random scorer must land at HR@K = K/(J+1) within binomial
noise, and a scorer that always puts the positive first must hit every
metric exactly; anything else means the harness leaks the answer.
"""

import numpy as np

from a2cf.data import Corpus
from a2cf.evaluation import evaluate_protocol
from a2cf.ranking import EstimatedMatrices

N_ITEMS = 1010          # enough for full 1000-negative pools
CASES = 5000
POOL = 1000


def fake_corpus() -> Corpus:
    return Corpus(user_tokens=["u0"],
                  item_tokens=[f"i{k:04d}" for k in range(N_ITEMS)],
                  attr_tokens=["a0", "a1"],
                  interactions=np.array([[0, 0]], dtype=np.int64),
                  lexicon=np.array([[0, 0, 0, 1]], dtype=np.int64),
                  substitute_pairs=np.empty((0, 2), dtype=np.int64))


def random_scorer(u, q, cands, rng):
    return rng.random(len(cands))


def oracle_scorer(u, q, cands, rng):
    scores = np.zeros(len(cands))
    scores[0] = 1.0     # the protocol always places the positive at index 0
    return scores


def main():
    corpus = fake_corpus()
    est = EstimatedMatrices(user_attr=np.ones((1, 2)),
                            item_attr=np.ones((N_ITEMS, 2)))
    rng = np.random.default_rng(3)
    test = np.stack([np.zeros(CASES, dtype=np.int64),
                     rng.integers(N_ITEMS, size=CASES),
                     rng.integers(N_ITEMS, size=CASES)], axis=1)

    noisy = evaluate_protocol(None, est, None, corpus, test, seed=1,
                              negatives=POOL, scorer=random_scorer)
    print(f"random scorer over {CASES} cases, {POOL} negatives each:")
    for k in (5, 10, 20, 50):
        hr = noisy.metrics[f"HR@{k}"]
        expect = k / (POOL + 1)
        sigma = np.sqrt(expect * (1 - expect) / CASES)
        print(f"  HR@{k:<3} = {hr:.5f}  expected {expect:.5f} "
              f"(binomial sigma {sigma:.5f})")

    perfect = evaluate_protocol(None, est, None, corpus, test, seed=1,
                                negatives=POOL, scorer=oracle_scorer)
    print("oracle scorer:")
    for name, value in perfect.metrics.items():
        print(f"  {name} = {value:.4f}")


if __name__ == "__main__":
    main()
