"""Cluster-structured synthetic case corpus.

All clusters share one relation vocabulary and one topic vocabulary. A
cluster is a sparse frequency profile over each (a Dirichlet draw), and its
template triplets pair generic entities with relations drawn from that
profile. A case samples 5-15 cluster triplets plus 0-3 noise triplets over
generic relations and renders each as a sentence in a random section.
Section texts add filler sentences whose topic words follow the cluster's
topic profile and never appear in a triplet. Relevance is cluster
membership.

Since most vocabulary words turn up in most documents, presence alone says
little and the signal lives in how often words occur. Repeated triplets
collapse to one graph edge, so section text carries frequency information
the graph structure does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import CaseRecord

GENERIC_ENTITIES = (
    "applicant respondent minister officer tribunal court board spouse child employer "
    "agent company government department family witness lawyer judge claimant owner "
    "tenant bank province authority agency member person party representative division"
).split()
GENERIC_RELATIONS = "is has had filed made received sought found".split()
FILLER_WORDS = (
    "matter record hearing date reasons notice counsel order file section paragraph "
    "review request period letter document submission statement response issue basis"
).split()

_ONSETS = "b c d f g h j k l m n p r s t v w z br cl dr fr gr pl st tr".split()
_VOWELS = "a e i o u ai ea io ou".split()
_CODAS = ["", "n", "r", "s", "t", "l", "x", "m"]


def _pseudo_word(rng: np.random.Generator, taken: set) -> str:
    while True:
        n = int(rng.integers(2, 4))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(n)
        ) + _CODAS[rng.integers(len(_CODAS))]
        if w not in taken:
            taken.add(w)
            return w


def _sentence(h: str, r: str, t: str) -> str:
    return f"The {h} {r} the {t}."


@dataclass
class SynthConfig:
    n_cases: int = 100
    n_clusters: int = 10
    seed: int = 0
    min_triplets: int = 5
    max_triplets: int = 15
    max_noise_triplets: int = 3
    relation_vocab: int = 12
    topic_vocab: int = 12
    concentration: float = 0.3
    filler_sentences: int = 12
    topic_words_per_filler: int = 3
    extraction_rate: float = 1.0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.n_clusters < 1 or self.n_cases < self.n_clusters:
            raise ValueError("need n_cases >= n_clusters >= 1")
        if not 0 < self.min_triplets <= self.max_triplets:
            raise ValueError("need 0 < min_triplets <= max_triplets")
        if self.max_noise_triplets < 0 or self.filler_sentences < 0 or self.topic_words_per_filler < 0:
            raise ValueError("counts must be >= 0")
        if self.relation_vocab < 1 or self.topic_vocab < 1 or not self.concentration > 0:
            raise ValueError("vocabularies must be non-empty and concentration > 0")
        if not 0.0 <= self.extraction_rate <= 1.0 or not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("extraction_rate must lie in [0, 1] and test_fraction in [0, 1)")


@dataclass
class _Cluster:
    relations: np.ndarray
    topics: np.ndarray
    entities: np.ndarray


def _make_clusters(cfg: SynthConfig, rng: np.random.Generator):
    taken = set(GENERIC_ENTITIES) | set(GENERIC_RELATIONS) | set(FILLER_WORDS)
    relations = [_pseudo_word(rng, taken) for _ in range(cfg.relation_vocab)]
    topics = [_pseudo_word(rng, taken) for _ in range(cfg.topic_vocab)]
    n_ent = len(GENERIC_ENTITIES)
    clusters = [
        _Cluster(
            relations=rng.dirichlet([cfg.concentration] * cfg.relation_vocab),
            topics=rng.dirichlet([cfg.concentration] * cfg.topic_vocab),
            entities=np.full(n_ent, 1.0 / n_ent),
        )
        for _ in range(cfg.n_clusters)
    ]
    return clusters, relations, topics


def _filler(rng: np.random.Generator, topics: list[str], profile: np.ndarray, n_topic_words: int) -> str:
    words = [FILLER_WORDS[rng.integers(len(FILLER_WORDS))] for _ in range(int(rng.integers(4, 8)))]
    for _ in range(n_topic_words):
        words[int(rng.integers(len(words)))] = topics[rng.choice(len(topics), p=profile)]
    return "The " + " ".join(words) + "."


def generate(cfg: SynthConfig) -> tuple[list[CaseRecord], dict[str, list[str]], dict[str, list[str]]]:
    """Return ``(cases, train_labels, test_labels)``.

    Cases are split by cluster-stratified sampling. Training labels only
    mention training cases; each test query's relevant set is every other
    case of its cluster in the whole corpus.
    """
    rng = np.random.default_rng(cfg.seed)
    clusters, relations, topics = _make_clusters(cfg, rng)
    n_ent, n_gen = len(GENERIC_ENTITIES), len(GENERIC_RELATIONS)
    width = len(str(cfg.n_cases - 1))

    cases, cluster_of = [], {}
    for i in range(cfg.n_cases):
        c = i % cfg.n_clusters
        cl = clusters[c]
        cid = f"case{i:0{width}d}"
        cluster_of[cid] = c
        k = int(rng.integers(cfg.min_triplets, cfg.max_triplets + 1))
        trips = [
            (
                GENERIC_ENTITIES[rng.choice(n_ent, p=cl.entities)],
                relations[rng.choice(len(relations), p=cl.relations)],
                GENERIC_ENTITIES[rng.choice(n_ent, p=cl.entities)],
            )
            for _ in range(k)
        ]
        trips += [
            (
                GENERIC_ENTITIES[rng.integers(n_ent)],
                GENERIC_RELATIONS[rng.integers(n_gen)],
                GENERIC_ENTITIES[rng.integers(n_ent)],
            )
            for _ in range(int(rng.integers(0, cfg.max_noise_triplets + 1)))
        ]
        sections = {"fact": [], "issue": []}
        extracted = {"fact": [], "issue": []}
        for t in trips:
            section = "fact" if rng.random() < 0.5 else "issue"
            sections[section].append(t)
            if rng.random() < cfg.extraction_rate:
                extracted[section].append(t)
        texts = {}
        for section, sec_trips in sections.items():
            sents = [_sentence(*t) for t in sec_trips]
            sents += [
                _filler(rng, topics, cl.topics, cfg.topic_words_per_filler)
                for _ in range(cfg.filler_sentences)
            ]
            order = rng.permutation(len(sents))
            texts[section] = " ".join(sents[j] for j in order)
        cases.append(
            CaseRecord(
                case_id=cid,
                fact_text=texts["fact"],
                issue_text=texts["issue"],
                fact_triplets=[list(t) for t in extracted["fact"]],
                issue_triplets=[list(t) for t in extracted["issue"]],
            )
        )

    test_ids = set()
    for c in range(cfg.n_clusters):
        members = sorted(cid for cid, cc in cluster_of.items() if cc == c)
        n_test = max(1, int(round(cfg.test_fraction * len(members)))) if cfg.test_fraction > 0 else 0
        for j in rng.choice(len(members), size=n_test, replace=False):
            test_ids.add(members[j])

    ids = [c.case_id for c in cases]
    train_labels, test_labels = {}, {}
    for q in ids:
        same = [d for d in ids if d != q and cluster_of[d] == cluster_of[q]]
        if q in test_ids:
            test_labels[q] = same
        else:
            train_labels[q] = [d for d in same if d not in test_ids]
    return cases, train_labels, test_labels
