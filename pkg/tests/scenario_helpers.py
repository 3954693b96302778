"""Small in-memory scenario configs shared by the config/scenario/cli tests."""

import copy

BAR_2D = {
    "name": "bar",
    "geometry": {"mode": "plane_stress", "lower": [0.0, 0.0], "upper": [10.0, 4.0],
                 "thickness": 1.0},
    "discretization": {"dx": 1.0, "m_ratio": 3.0},
    "material": {"young_modulus": 1.0e6, "poisson_ratio": 0.25, "density": 1.0,
                 "fracture_energy": 1.0},
    "boundary": {
        "fixed": [{"region": {"lower": [0.0, 0.0], "upper": [1.0, 4.0]}, "components": ["x", "y"]}],
        "traction": [{"region": {"lower": [9.0, 0.0], "upper": [10.0, 4.0]},
                      "direction": [1.0, 0.0], "stress": 10.0, "area": 4.0,
                      "time": {"kind": "sine", "omega": 50.0}}],
    },
    "integrator": {"type": "explicit", "dt": 1.0e-4, "steps": 40},
    "solver": {"kernel": "loop", "fracture": False},
    "output": {"probes": [[9.5, 3.5]], "snapshot_every": 20},
}


def bar(**sections):
    """Deep copy of BAR_2D with top-level sections replaced or updated."""
    data = copy.deepcopy(BAR_2D)
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key].update(value)
        else:
            data[key] = value
    return data


def to_toml(data: dict) -> str:
    """Minimal TOML writer for the shapes used in BAR_2D-like dicts."""
    def val(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, (int, float)):
            return repr(v)
        if isinstance(v, list):
            return "[" + ", ".join(val(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{ " + ", ".join(f"{k} = {val(x)}" for k, x in v.items()) + " }"
        raise TypeError(v)

    lines = [f"{k} = {val(v)}" for k, v in data.items() if not isinstance(v, (dict, list))]
    for k, v in data.items():
        if isinstance(v, dict):
            scalars = {a: b for a, b in v.items()
                       if not (isinstance(b, list) and b and isinstance(b[0], dict))}
            lines.append(f"\n[{k}]")
            lines += [f"{a} = {val(b)}" for a, b in scalars.items()]
            for a, b in v.items():
                if a not in scalars:
                    for item in b:
                        lines.append(f"\n[[{k}.{a}]]")
                        lines += [f"{c} = {val(e)}" for c, e in item.items()]
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for item in v:
                lines.append(f"\n[[{k}]]")
                lines += [f"{c} = {val(e)}" for c, e in item.items()]
    return "\n".join(lines) + "\n"
