import json

import numpy as np
import pytest

from cmseq.errors import MalformedInput
from cmseq.models import random_cml0k2_model, random_cml_model, random_cmf_model, random_markov_model
from cmseq.serialization import (
    loads,
    matrix_from_json,
    model_digest,
    model_from_json,
    model_to_json,
    representation_from_json,
    representation_to_json,
)
from cmseq.transforms import decompose_to_representation, induce_cml_from_markov


def _same(a, b):
    assert model_to_json(a) == model_to_json(b)


def test_model_round_trips(rng):
    models = [random_markov_model(rng, 4, 2), random_cml_model(rng, 4, 2),
              random_cmf_model(rng, 4, 2), random_cml0k2_model(rng, 6, 2, 3),
              induce_cml_from_markov(random_markov_model(rng, 4, 1))]
    for m in models:
        _same(m, model_from_json(json.loads(json.dumps(model_to_json(m)))))


def test_representation_round_trip(rng):
    for m in (random_cml_model(rng, 4, 2), random_cmf_model(rng, 4, 2)):
        r = decompose_to_representation(m)
        back = representation_from_json(representation_to_json(r))
        for k in r.times:
            np.testing.assert_array_equal(back.Gamma(k), r.Gamma(k))


def test_layout_fields(rng):
    obj = model_to_json(random_cmf_model(rng, 3, 1))
    assert obj["kind"] == "cmf" and len(obj["params"]["first_step"]) == 1
    assert len(obj["params"]["noise_cov"]) == 3 and set(obj["boundary"]) == {"endpoint_cov"}


def test_digest_stable(rng):
    m = random_markov_model(rng, 3, 2)
    assert model_digest(m) == model_digest(model_from_json(model_to_json(m)))
    assert len(model_digest(m)) == 64


def test_bad_json_reports_line():
    with pytest.raises(MalformedInput, match="line 2"):
        loads('{"kind": "markov",\n "N": }')


@pytest.mark.parametrize("mutate, field", [
    (lambda o: o.pop("kind"), "kind"),
    (lambda o: o.update(kind="hmm"), "kind"),
    (lambda o: o["params"]["transition"].pop(), "params.transition"),
    (lambda o: o["params"]["noise_cov"].__setitem__(0, [[1.0, 2.0]]), "params.noise_cov[0]"),
    (lambda o: o["params"].update(extra=[]), "unknown"),
    (lambda o: o.update(N="3"), "N"),
])
def test_malformed_model_diagnostics(rng, mutate, field):
    obj = model_to_json(random_markov_model(rng, 3, 1))
    mutate(obj)
    with pytest.raises(MalformedInput, match=field.replace("[", r"\[").replace("]", r"\]")):
        model_from_json(obj)


def test_matrix_errors():
    with pytest.raises(MalformedInput):
        matrix_from_json({"n_blocks": 2, "block_dim": 1})
    with pytest.raises(MalformedInput):
        matrix_from_json({"n_blocks": 2, "block_dim": 1, "rows": [[1, 2], [0, 1]]})
