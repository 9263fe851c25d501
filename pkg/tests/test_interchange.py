"""Interchange JSON parsing, writing, and round-trip guarantees."""

import json
import random

import numpy as np
import pytest

from modelgen import random_bdt, random_fcnn, single_stump_bdt
from ml2rtl.interchange import (
    DepthCapExceeded,
    EmptyModel,
    MalformedJson,
    StructuralViolation,
    UnknownSchemaVersion,
    parse_model,
    write_model,
)
from ml2rtl.model_ir import BdtEnsemble, FcnnModel, Internal, Leaf, Objective, Tree

MINIMAL_BDT = {
    "schema_version": "1.0",
    "model_kind": "bdt",
    "payload": {
        "n_features": 1,
        "n_classes": 1,
        "base_scores": [0.0],
        "objective": "sigmoid",
        "trees": [{"class_index": 0, "nodes": [{"leaf": 0.5}]}],
    },
}


def test_parse_minimal_bdt():
    m = parse_model(json.dumps(MINIMAL_BDT))
    assert isinstance(m, BdtEnsemble)
    assert len(m.trees) == 1
    assert isinstance(m.trees[0][1].nodes[0], Leaf)


def test_unknown_model_kind_rejected():
    doc = dict(MINIMAL_BDT, model_kind="tree")
    with pytest.raises(StructuralViolation):
        parse_model(json.dumps(doc))


def test_unknown_schema_version_rejected():
    doc = dict(MINIMAL_BDT, schema_version="2.0")
    with pytest.raises(UnknownSchemaVersion):
        parse_model(json.dumps(doc))


def test_malformed_json_rejected():
    with pytest.raises(MalformedJson):
        parse_model(b"{not json")
    with pytest.raises(MalformedJson):
        parse_model(b"[1,2,3]")
    with pytest.raises(MalformedJson):
        parse_model(b"\xff\xfe\x00")


def test_nan_and_infinity_rejected():
    doc = json.dumps(MINIMAL_BDT).replace("0.5", "NaN")
    with pytest.raises(MalformedJson):
        parse_model(doc)
    huge = json.dumps(MINIMAL_BDT).replace("0.5", "1e999")
    with pytest.raises(StructuralViolation):
        parse_model(huge)


def test_fcnn_bias_mismatch_rejected():
    doc = {
        "schema_version": "1.0",
        "model_kind": "fcnn",
        "payload": {
            "layers": [
                {"weights": [[1.0, 2.0], [3.0, 4.0]], "bias": [0.0], "activation": "linear"}
            ]
        },
    }
    with pytest.raises(StructuralViolation) as err:
        parse_model(json.dumps(doc))
    assert any(v.code == "shape_mismatch" for v in err.value.violations)


def test_depth_cap_is_a_distinct_error():
    nodes = []
    for i in range(40):
        nodes.append({"feature": 0, "threshold": 0.5, "left": 2 * i + 1, "right": 2 * i + 2})
        nodes.append({"leaf": 0.0})
    nodes.append({"leaf": 0.0})
    doc = {
        "schema_version": "1.0",
        "model_kind": "bdt",
        "payload": {
            "n_features": 1,
            "n_classes": 1,
            "base_scores": [0.0],
            "objective": "sigmoid",
            "trees": [{"class_index": 0, "nodes": nodes}],
        },
    }
    with pytest.raises(DepthCapExceeded):
        parse_model(json.dumps(doc))


def test_roundtrip_structural_equality():
    rng = random.Random(11)
    for _ in range(20):
        m = random_bdt(rng, n_features=6, n_classes=3, n_trees=7, max_depth=4)
        m2 = parse_model(write_model(m))
        assert m2 == m
    for _ in range(20):
        f = random_fcnn(rng)
        f2 = parse_model(write_model(f))
        assert isinstance(f2, FcnnModel)
        assert len(f2.layers) == len(f.layers)
        for a, b in zip(f2.layers, f.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
            assert a.activation == b.activation


def test_write_is_deterministic():
    rng = random.Random(12)
    m = random_bdt(rng, n_trees=5)
    assert write_model(m) == write_model(m)
    f = random_fcnn(rng)
    assert write_model(f) == write_model(f)


def test_empty_model_rejected_on_write():
    with pytest.raises(EmptyModel):
        write_model(BdtEnsemble(1, 1, (), (0.0,), Objective.SIGMOID))
    with pytest.raises(EmptyModel):
        write_model(FcnnModel(()))


def _mutate(doc, rng: random.Random):
    """Randomly corrupt one value in a JSON document tree."""
    doc = json.loads(json.dumps(doc))

    def walk(node, path):
        if isinstance(node, dict):
            for k, v in node.items():
                yield (node, k)
                yield from walk(v, path + [k])
        elif isinstance(node, list):
            for i, v in enumerate(node):
                yield (node, i)
                yield from walk(v, path + [i])

    spots = list(walk(doc, []))
    container, key = spots[rng.randrange(len(spots))]
    choice = rng.random()
    if choice < 0.4:
        container[key] = rng.choice([-1, 99, "bogus", None, 1e999, True])
    elif choice < 0.7 and isinstance(container, dict):
        del container[key]
    else:
        container[key] = [] if not isinstance(container[key], list) else {}
    return doc


def test_fuzzed_documents_never_yield_invalid_models():
    """Mutated docs either fail to parse or produce a model passing validation."""
    from ml2rtl.model_ir import validate_bdt, validate_fcnn

    rng = random.Random(99)
    base_docs = [
        json.loads(write_model(random_bdt(rng, n_features=3, n_trees=3))),
        json.loads(write_model(random_fcnn(rng, sizes=[3, 2, 2]))),
        MINIMAL_BDT,
    ]
    parsed = 0
    for _ in range(400):
        doc = _mutate(rng.choice(base_docs), rng)
        try:
            m = parse_model(json.dumps(doc))
        except (MalformedJson, UnknownSchemaVersion, StructuralViolation, EmptyModel):
            continue
        except (TypeError, ValueError):
            pytest.fail("parser leaked a non-domain exception")
        parsed += 1
        check = validate_bdt if isinstance(m, BdtEnsemble) else validate_fcnn
        assert check(m) == []
    assert parsed > 0  # some mutations are harmless (e.g. metadata tweaks)
