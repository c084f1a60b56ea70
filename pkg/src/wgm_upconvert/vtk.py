"""Legacy ASCII VTK writer for triangle meshes in the (r, z) plane."""

import numpy as np

VTK_TRIANGLE = 5


def _write_array(fh, name, values):
    values = np.asarray(values)
    if values.ndim == 1:
        kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
        fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
        fmt = "%d" if kind == "int" else "%.9e"
        np.savetxt(fh, values[:, None], fmt=fmt)
    elif values.ndim == 2 and values.shape[1] == 3:
        fh.write(f"VECTORS {name} double\n")
        np.savetxt(fh, values, fmt="%.9e")
    else:
        raise ValueError(f"unsupported array shape {values.shape} for {name!r}")


def write_unstructured_grid(path, nodes, triangles, point_data=None, cell_data=None, title="mesh"):
    """Write nodes (r, z) as (x, y, 0) points and linear triangles.

    Complex arrays are split into ``<name>_re`` / ``<name>_im``.
    """
    nodes = np.asarray(nodes, dtype=float)
    triangles = np.asarray(triangles, dtype=int)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(nodes)} double\n")
        np.savetxt(fh, np.column_stack([nodes, np.zeros(len(nodes))]), fmt="%.9e")
        fh.write(f"CELLS {len(triangles)} {4 * len(triangles)}\n")
        np.savetxt(fh, np.column_stack([np.full(len(triangles), 3), triangles]), fmt="%d")
        fh.write(f"CELL_TYPES {len(triangles)}\n")
        np.savetxt(fh, np.full((len(triangles), 1), VTK_TRIANGLE), fmt="%d")
        for header, data, count in (
            ("POINT_DATA", point_data, len(nodes)),
            ("CELL_DATA", cell_data, len(triangles)),
        ):
            if not data:
                continue
            fh.write(f"{header} {count}\n")
            for name, values in data.items():
                values = np.asarray(values)
                if np.iscomplexobj(values):
                    _write_array(fh, f"{name}_re", values.real)
                    _write_array(fh, f"{name}_im", values.imag)
                else:
                    _write_array(fh, name, values)


def read_unstructured_grid(path):
    """Minimal reader for files produced by :func:`write_unstructured_grid`."""
    tokens = open(path).read().split("\n")
    i = 0
    out = {"point_data": {}, "cell_data": {}}
    section = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            out["points"] = np.loadtxt(tokens[i + 1 : i + 1 + n], ndmin=2)
            i += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            out["cells"] = np.loadtxt(tokens[i + 1 : i + 1 + n], dtype=int, ndmin=2)[:, 1:]
            i += n
        elif line.startswith("CELL_TYPES"):
            n = int(line.split()[1])
            out["cell_types"] = np.loadtxt(tokens[i + 1 : i + 1 + n], dtype=int, ndmin=1)
            i += n
        elif line.startswith("POINT_DATA"):
            section, count = "point_data", int(line.split()[1])
        elif line.startswith("CELL_DATA"):
            section, count = "cell_data", int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            out[section][name] = np.loadtxt(tokens[i + 2 : i + 2 + count], ndmin=1)
            i += 1 + count
        elif line.startswith("VECTORS"):
            name = line.split()[1]
            out[section][name] = np.loadtxt(tokens[i + 1 : i + 1 + count], ndmin=2)
            i += count
        i += 1
    return out
