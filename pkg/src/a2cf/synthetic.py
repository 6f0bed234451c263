"""Synthetic corpus generator with planted, recoverable structure.

Items live in clusters sharing salient functional attributes; substitute
pairs are exactly the within-cluster pairs, so cluster identity is the
substitution signal. On top of that, users belong to one of a few taste
profiles and every item expresses one style: the attribute vocabulary is
split into a functional pool (salient sets are drawn from it) and one
taste block per profile. An item is good at its own block and bad at the
others, and users buy style-matching items inside a few "home" clusters,
which makes within-cluster choice a low-rank, learnable preference signal
rather than per-user noise.

Outputs are plain corpus files (reviews/lexicon/substitutes) plus a
planted.npz holding the ground-truth preference and quality vectors.
"""

import os
from dataclasses import dataclass

import numpy as np

TIMESTAMP_BASE = 1_600_000_000
TIMESTAMP_STEP = 86_400


@dataclass
class SyntheticSpec:
    users: int = 200
    items: int = 300
    attributes: int = 30
    clusters: int = 20
    interactions_per_user: int = 10
    taste_profiles: int = 3         # user archetypes / item styles
    functional_attrs: int = 15      # pool that cluster-salient sets draw from
    cared_attrs: int = 2            # functional attributes each user cares about
    salient_attrs: int = 3          # salient attributes per cluster
    home_clusters: int = 3          # clusters a user shops in
    noise: float = 0.1              # sentiment flip probability
    rating_max: int = 5
    min_item_users: int = 5         # coverage repaired up to this level
    choice_temp: float = 0.12       # softmax temperature for item choice
    pop_spread: float = 0.08        # item-level popularity spread at choice time

    def __post_init__(self):
        if self.users < 1 or self.items < 1:
            raise ValueError("users and items must be >= 1")
        if self.interactions_per_user < 5:
            raise ValueError("interactions_per_user must be >= 5 so users "
                             "survive the activity filter")
        if self.clusters < 1 or self.items < self.clusters:
            raise ValueError("need at least one item per cluster")
        if self.items // self.clusters < 2:
            raise ValueError("clusters need >= 2 items to form substitute pairs")
        if self.taste_profiles < 1:
            raise ValueError("taste_profiles must be >= 1")
        if self.functional_attrs + self.taste_profiles > self.attributes:
            raise ValueError("attribute vocabulary too small for the "
                             "functional pool plus one block per profile")
        if self.salient_attrs > self.functional_attrs:
            raise ValueError("salient_attrs exceeds the functional pool")
        if self.cared_attrs > self.functional_attrs:
            raise ValueError("cared_attrs exceeds the functional pool")
        if self.home_clusters > self.clusters:
            raise ValueError("home_clusters exceeds cluster count")
        if self.users <= self.min_item_users:
            raise ValueError("too few users to give every item enough coverage")
        if not 0.0 <= self.noise <= 0.5:
            raise ValueError("noise must be in [0, 0.5]")


def _tokens(prefix: str, n: int) -> list:
    width = max(3, len(str(n - 1)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir: str) -> dict:
    """Write reviews.tsv / lexicon.tsv / substitutes.tsv / planted.npz under
    out_dir and return their paths. Fully deterministic in (spec, seed)."""
    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    U, V, A, C = spec.users, spec.items, spec.attributes, spec.clusters
    T, F = spec.taste_profiles, spec.functional_attrs

    # attribute roles: [0, F) functional, the rest split into taste blocks
    block_of = np.full(A, -1, dtype=np.int64)
    for t, blk in enumerate(np.array_split(np.arange(F, A), T)):
        block_of[blk] = t

    # planted item structure; consecutive items cycle through styles so every
    # cluster carries a balanced style mix
    cluster_of = np.repeat(np.arange(C), -(-V // C))[:V]
    style_of = np.arange(V) % T
    salient = np.zeros((C, A), dtype=bool)
    for c in range(C):
        salient[c, rng.choice(F, size=spec.salient_attrs, replace=False)] = True
    quality = rng.uniform(-0.2, 0.2, size=(V, A))
    for v in range(V):
        own = block_of == style_of[v]
        other = (block_of >= 0) & ~own
        quality[v, own] = rng.uniform(0.4, 1.0, size=int(own.sum()))
        quality[v, other] = rng.uniform(-0.9, -0.4, size=int(other.sum()))
        sal = salient[cluster_of[v]]
        quality[v, sal] = rng.uniform(0.3, 1.0, size=int(sal.sum()))
    # mute functional attributes that are not salient for the item's cluster;
    # taste blocks always count so style mismatch is felt at choice time
    gate = np.where(salient[cluster_of] | (block_of >= 0)[None, :], 1.0, 0.08)
    item_signal = quality * gate                          # (V, A)

    # planted user structure
    archetype_of = rng.integers(0, T, size=U)
    prefs = np.full((U, A), 0.02)
    cared = np.zeros((U, A), dtype=bool)
    home = np.zeros((U, C), dtype=bool)
    for u in range(U):
        pick = rng.choice(F, size=spec.cared_attrs, replace=False)
        cared[u, pick] = True
        prefs[u, pick] += rng.uniform(0.5, 1.0, size=spec.cared_attrs)
        own = block_of == archetype_of[u]
        prefs[u, own] += rng.uniform(0.5, 1.0, size=int(own.sum()))
        overlap = salient @ prefs[u] + 1e-6 * rng.random(C)
        home[u, np.argsort(-overlap)[:spec.home_clusters]] = True
    prefs /= prefs.sum(axis=1, keepdims=True)

    # interactions: users sample high-affinity items inside home clusters;
    # a fixed per-item boost skews choices so item degrees spread out
    affinity = prefs @ item_signal.T                      # (U, V)
    pop_boost = rng.normal(0.0, spec.pop_spread, size=V)
    cluster_items = [np.nonzero(cluster_of == c)[0] for c in range(C)]
    interactions: list = []
    have = [set() for _ in range(U)]
    for u in range(U):
        homes = np.nonzero(home[u])[0]
        for _ in range(spec.interactions_per_user):
            c = int(homes[rng.integers(len(homes))])
            avail = np.array([v for v in cluster_items[c] if v not in have[u]])
            if len(avail) == 0:
                others = [v for cc in homes for v in cluster_items[cc]
                          if v not in have[u]]
                if not others:
                    break
                avail = np.array(sorted(others))
            logits = (affinity[u, avail] + pop_boost[avail]) / spec.choice_temp
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            v = int(avail[rng.choice(len(avail), p=probs)])
            have[u].add(v)
            interactions.append((u, v))

    # coverage repair: every item needs min_item_users distinct users
    item_users = [set() for _ in range(V)]
    for u, v in interactions:
        item_users[v].add(u)
    for v in range(V):
        deficit = spec.min_item_users - len(item_users[v])
        if deficit <= 0:
            continue
        outsiders = np.array([u for u in range(U) if u not in item_users[v]])
        order = outsiders[np.argsort(-affinity[outsiders, v], kind="stable")]
        for u in order[:deficit]:
            u = int(u)
            have[u].add(v)
            item_users[v].add(u)
            interactions.append((u, v))

    # ratings from affinity; mentions land on attributes the user weights
    # among those the item actually exposes (cluster salient + its block)
    aff_scale = float(np.std(affinity)) + 1e-12
    mention_gate = 0.08 + 0.92 * (salient[cluster_of]
                                  | (block_of[None, :] == style_of[:, None]))
    reviews = []
    lexicon = []
    attr_count = np.zeros(A, dtype=np.int64)
    for idx, (u, v) in enumerate(interactions):
        z = affinity[u, v] / aff_scale
        rating = int(np.clip(np.rint(3.0 + 1.5 * np.tanh(z)
                                     + 0.5 * rng.standard_normal()), 1,
                             spec.rating_max))
        reviews.append((u, v, rating, TIMESTAMP_BASE + idx * TIMESTAMP_STEP))
        n_mentions = 2 + int(rng.random() < 0.5)
        weights = (0.02 + prefs[u]) * mention_gate[v]
        probs = weights / weights.sum()
        for a in rng.choice(A, size=n_mentions, p=probs):
            a = int(a)
            sentiment = 1 if quality[v, a] >= 0 else -1
            if rng.random() < spec.noise:
                sentiment = -sentiment
            lexicon.append((u, v, a, sentiment))
            attr_count[a] += 1

    # mention repair: every attribute needs >= 2 mentions to survive filtering
    for a in range(A):
        need = 2 - int(attr_count[a])
        for k in range(max(0, need)):
            u, v = interactions[k % len(interactions)]
            lexicon.append((u, v, a, 1))
            attr_count[a] += 1

    user_tok = _tokens("u", U)
    item_tok = _tokens("i", V)
    attr_tok = _tokens("a", A)
    paths = {name: os.path.join(out_dir, fname) for name, fname in (
        ("reviews", "reviews.tsv"), ("lexicon", "lexicon.tsv"),
        ("substitutes", "substitutes.tsv"), ("planted", "planted.npz"))}
    with open(paths["reviews"], "w", encoding="utf-8") as fh:
        fh.write("# user\titem\trating\ttimestamp\n")
        for u, v, r, ts in reviews:
            fh.write(f"{user_tok[u]}\t{item_tok[v]}\t{r}\t{ts}\n")
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        fh.write("# user\titem\tattribute\tsentiment\n")
        for u, v, a, s in lexicon:
            fh.write(f"{user_tok[u]}\t{item_tok[v]}\t{attr_tok[a]}\t{'+1' if s > 0 else '-1'}\n")
    with open(paths["substitutes"], "w", encoding="utf-8") as fh:
        fh.write("# item\titem\n")
        for c in range(C):
            members = cluster_items[c]
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    fh.write(f"{item_tok[members[i]]}\t{item_tok[members[j]]}\n")
    np.savez(paths["planted"], preferences=prefs, quality=quality,
             salient=salient, cluster_of=cluster_of, cared=cared, home=home,
             archetype_of=archetype_of, style_of=style_of, block_of=block_of)
    return paths
