"""Reference hierarchy values for the three standard scenarios.

Each scenario maps to its rows in display order.  A row lists the level, the
lifting mode, ``gamma_sq``, the free entries ``p_2..p_r``, ``q_2..q_r``,
``c_2..c_r`` and the reported energy (``f`` for the positive model, ``-f``
i.e. the minimum norm for the negative one).  Values are rounded to four
decimals as published.
"""

SCENARIOS = {
    ("positive", 1.0): [
        dict(r=1, mode="full", gamma_sq=0.5, p=[], q=[], c=[], energy=1.7979),
        dict(r=2, mode="partial", gamma_sq=0.6173, p=[0.0], q=[0.0], c=[0.4246], energy=1.7832),
        dict(r=2, mode="full", gamma_sq=0.6941, p=[0.5315], q=[0.6320], c=[1.0056], energy=1.7801),
        dict(r=3, mode="partial", gamma_sq=0.7434, p=[0.7510, 0.0], q=[0.8397, 0.0],
             c=[1.7762, 0.2508], energy=1.7791),
        dict(r=3, mode="full", gamma_sq=0.7752, p=[0.8504, 0.36], q=[0.9160, 0.4427],
             c=[2.6825, 0.5044], energy=1.7788),
    ],
    ("negative", 1.0): [
        dict(r=1, mode="full", gamma_sq=0.5, p=[], q=[], c=[], energy=0.2021),
        dict(r=2, mode="full", gamma_sq=0.1654, p=[0.0], q=[0.0], c=[2.6916], energy=0.3202),
        dict(r=3, mode="full", gamma_sq=0.1748, p=[0.5722, 0.0], q=[0.0599, 0.0],
             c=[2.2264, 10.54], energy=0.3272),
        dict(r=4, mode="partial", gamma_sq=0.1766, p=[0.6836, 0.3639, 0.0],
             q=[0.1282, 0.0107, 0.0], c=[2.1306, 5.07, 27.98], energy=0.3279),
    ],
    ("negative", 3.5): [
        dict(r=1, mode="full", gamma_sq=0.9354, p=[], q=[], c=[], energy=1.0729),
        dict(r=2, mode="partial", gamma_sq=0.6366, p=[0.0], q=[0.0], c=[1.4759], energy=1.1288),
        dict(r=2, mode="full", gamma_sq=0.6234, p=[0.3416], q=[0.2154], c=[1.6843], energy=1.1301),
        dict(r=3, mode="partial", gamma_sq=0.6030, p=[0.7921, 0.0], q=[0.6399, 0.0],
             c=[2.26, 1.15], energy=1.1309),
        dict(r=3, mode="full", gamma_sq=0.5940, p=[0.8935, 0.2464], q=[0.7887, 0.1508],
             c=[2.79, 1.40], energy=1.1312),
    ],
}


def scenario(model, alpha):
    """Reference rows for (model, alpha) or None when no table exists."""
    return SCENARIOS.get((model, float(alpha)))


def default_rows(model, alpha, max_level=None):
    """(r, mode) rows in display order.

    Known scenarios reuse their row layout; otherwise every level gets a
    partial and a full row (level 1 has only one).
    """
    ref = scenario(model, alpha)
    if ref is not None:
        rows = [(row["r"], row["mode"]) for row in ref]
        if max_level is not None:
            rows = [rm for rm in rows if rm[0] <= max_level]
            top = max((rm[0] for rm in rows), default=0)
            for r in range(top + 1, max_level + 1):
                rows += [(r, "partial"), (r, "full")]
        return rows
    max_level = 3 if max_level is None else max_level
    rows = [(1, "full")]
    for r in range(2, max_level + 1):
        rows += [(r, "partial"), (r, "full")]
    return rows
