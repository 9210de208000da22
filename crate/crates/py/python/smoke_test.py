"""Smoke test for the robbins extension module. Run after `maturin develop`."""

import math

import robbins


def main():
    assert abs(robbins.exact_value(2)["value"] - 1.25) < 1e-9
    try:
        robbins.exact_value(7)
    except robbins.ResourceBoundError:
        pass
    else:
        raise AssertionError("n = 7 should be refused")

    assert robbins.secretary(5)["cutoff"] == 3
    phi = robbins.phi_family(1.9, 50)
    assert len(phi) == 50 and abs(phi[-1] - 1.0) < 1e-12
    exact = robbins.expected_rank(phi)
    mc = robbins.simulate_thresholds(phi, 20000, seed=7)
    assert abs(exact - mc["mean_rank"]) < 5 * mc["std_error"], (exact, mc)

    r = robbins.correlation(3, 200000, seed=1)
    assert abs(r["estimate"] - math.sqrt(0.5)) < 5 * r["std_error"], r

    w = robbins.value_w(2.0, 5.0)
    sim = robbins.simulate_w(2.0, 5.0, 20000)
    assert abs(w - sim["mean"]) < 5 * sim["se"], (w, sim)
    assert robbins.ode_limit(0.5, 50.0)["limit"] > 0

    try:
        robbins.phi_family(-1.0, 10)
    except ValueError:
        pass
    else:
        raise AssertionError("negative c should be rejected")

    s = robbins.Session(20, seed=11, objective="TOP_PERCENT(20)", secret=True)
    ledger = robbins.Ledger()
    view = s.view()
    assert "objective" not in view or view["objective"] is None
    while s.is_open:
        s.advance()
        if s.is_open and s.pending:
            s.decide(s.machine_decide("TOP_PERCENT(20)"))
    rec = s.record()
    assert rec["outcome"]["N"] == len(rec["instance"]["times"])
    log = s.event_log()
    assert log[-1]["type"] == "closed"
    ledger.update(s)
    assert abs(sum(w for _, w in ledger.weights()) - 1.0) < 1e-9
    try:
        s.decide("ACCEPT")
    except robbins.ConflictError:
        pass
    else:
        raise AssertionError("closed session accepted a decision")
    print("smoke test ok; ledger argmax", ledger.argmax())


if __name__ == "__main__":
    main()
