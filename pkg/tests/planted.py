"""Planted mapping fixture: 4 groups over 3 Sub-SPECs with disjoint vocabularies."""
import numpy as np

from coverassert.clustering import AssertionGroup
from coverassert.gateway import stub_embedding
from coverassert.semantic import SemanticRecord
from coverassert.spec_pipeline import FunctionalPoint, SubSpec

VOCAB = {
    "S1": ["req", "gnt", "arb_lock"],
    "S2": ["wr_en", "full", "wr_ptr"],
    "S3": ["rd_en", "empty", "rd_ptr"],
}

POINTS = {
    "S1": [("Every `req` is followed by `gnt` within two cycles.", ["gnt", "req"]),
           ("`arb_lock` holds `gnt` stable.", ["arb_lock", "gnt"])],
    "S2": [("No write happens while `full` is high and `wr_en` is asserted.", ["full", "wr_en"]),
           ("`wr_ptr` advances after each accepted `wr_en`.", ["wr_en", "wr_ptr"])],
    "S3": [("No read happens while `empty` is high.", ["empty", "rd_en"]),
           ("`rd_ptr` advances after each accepted `rd_en`.", ["rd_en", "rd_ptr"])],
}

# group -> (planted subspec, member assertion ids with their signals and intents)
GROUPS = {
    0: ("S1", [("a00", ["gnt", "req"], "SIGNALS[gnt,req] IMPLIES DELAY1"),
               ("a01", ["gnt", "req"], "SIGNALS[gnt,req] IMPLIES DELAY2")]),
    1: ("S2", [("a02", ["full", "wr_en"], "SIGNALS[full,wr_en] IMPLIES NOT")]),
    2: ("S3", [("a03", ["empty", "rd_en", "rd_ptr"], "SIGNALS[empty,rd_en,rd_ptr] AND")]),
    3: ("S1", [("a04", ["arb_lock", "gnt"], "SIGNALS[arb_lock,gnt] IMPLIES_NEXT STABLE")]),
}

DIM = 64


def unit(v):
    v = np.asarray(v, dtype=float)
    return tuple(float(x) for x in v / np.linalg.norm(v))


def build():
    subspecs = []
    for sid, pts in POINTS.items():
        body = " ".join(s for s, _ in pts)
        fps = tuple(FunctionalPoint(f"{sid}.p{k}", sid, s, tuple(sorted(sig)), unit(stub_embedding(s, DIM)))
                    for k, (s, sig) in enumerate(pts, start=1))
        subspecs.append(SubSpec(sid, f"Module {sid}", body, tuple(sorted(VOCAB[sid])),
                                unit(stub_embedding(f"Module {sid}\n{body}", DIM)), fps))
    groups, sems, planted = [], {}, {}
    for gid, (sid, members) in GROUPS.items():
        for aid, sigs, intent in members:
            sems[aid] = SemanticRecord(aid, intent, unit(stub_embedding(intent, DIM)), "stub", tuple(sorted(sigs)))
        groups.append(AssertionGroup(gid, tuple(a for a, _, _ in members), gid, ()))
        planted[gid] = sid
    return groups, subspecs, sems, planted
