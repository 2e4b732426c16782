"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""
import json
import math

import contradice_py as cd


def main():
    mdp = cd.TabularMdp.random(6, 3, gamma=0.9, seed=1)
    assert cd.TabularMdp.from_json(mdp.to_json()).to_json() == mdp.to_json()

    uniform = cd.Policy.uniform(mdp.n_states, mdp.n_actions)
    d = mdp.occupancy(uniform)
    assert math.isclose(sum(map(sum, d)), 1.0, abs_tol=1e-12)

    expert = mdp.soft_optimal_policy(mdp.reward, 0.01)
    assert mdp.policy_return(expert) > mdp.policy_return(uniform)

    d_g = mdp.occupancy(expert)
    # f with alpha = 0 is KL(d || d_g), zero at d_g, and the oracle finds it.
    assert abs(cd.f_value(d_g, d_g, d, 0.0)) < 1e-12
    _, value = cd.min_f(mdp, d_g, d, 0.0)
    assert value < 1e-6

    psi = [[math.log(g / u) for g, u in zip(rg, ru)] for rg, ru in zip(d_g, d)]
    assert abs(cd.f_value(d, d_g, d, 0.0) - cd.f_value_reformulated(d, d, psi, 0.0)) < 1e-10

    v = cd.soft_value([[1.0, 1.0, 1.0]], cd.Policy([[0.2, 0.3, 0.5]]), 0.7)
    assert abs(v[0] - 1.0) < 1e-12

    reports = json.loads(cd.verify())
    assert all(r["passed"] for r in reports)
    assert not all(r["passed"] for r in json.loads(cd.verify(mutation="psi-sign-flip")))

    result = json.loads(cd.train('layout = "checker"\nseeds = 2\n'))
    assert len(result["scores"]) == 2
    print(f"checker mean normalized score: {result['mean']:.3f}")

    try:
        cd.train("alpa = 0.5")
    except ValueError as e:
        assert "alpa" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("ok")


if __name__ == "__main__":
    main()
