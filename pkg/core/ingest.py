"""Node / edge CSV ingestion and canonical export.

Node table: ``id`` (string), optional ``x``/``y`` coordinates, ``p_treat``,
``z_obs``, ``y_post``, optional ``y_pre``; every other column is a
covariate. Edge table: ``src``, ``dst`` holding node ids. Without an edge
table, edges come from coordinates and a radius.

Errors name the 1-based file line, the header being line 1.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from core.design import BernoulliDesign
from core.network import NetworkError, ObservedData, build_network, \
    hotspot_pairs

logger = logging.getLogger(__name__)

NODE_REQUIRED = ['id', 'p_treat', 'z_obs', 'y_post']
NODE_OPTIONAL = ['x', 'y', 'y_pre']
EDGE_REQUIRED = ['src', 'dst']

# ===========================================================================

class IngestError(ValueError):
    pass


def _line(row):
    return row + 2


@dataclass
class Dataset:
    net: object
    design: BernoulliDesign
    data: ObservedData
    ids: list

    def __str__(self):
        return f"Dataset({self.net}, {self.design})"

    @property
    def index(self):
        return {name: i for i, name in enumerate(self.ids)}

    def lookup(self, names):
        index = self.index
        try:
            return [index[str(name)] for name in names]
        except KeyError as exc:
            raise IngestError(f"Unknown unit id {exc.args[0]}") from None


def _read(path, required, what):
    try:
        frame = pd.read_csv(path, dtype={'id': str, 'src': str, 'dst': str},
            skipinitialspace=True)
    except (OSError, pd.errors.ParserError) as exc:
        raise IngestError(f"Cannot read {what} table {path}: {exc}") from exc

    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise IngestError(f"{what} table {path} is missing column(s) "
            f"{', '.join(missing)}")
    return frame


def _numeric(frame, column, path):
    values = pd.to_numeric(frame[column], errors='coerce')
    bad = np.flatnonzero(values.isna().to_numpy())
    if len(bad):
        raise IngestError(f"{path} line {_line(bad[0])}: {column} value "
            f"'{frame[column].iloc[bad[0]]}' is not a number")
    return values.to_numpy(dtype=float)


def _check_nodes(frame, path):
    ids = frame['id']
    if ids.isna().any():
        row = int(np.flatnonzero(ids.isna().to_numpy())[0])
        raise IngestError(f"{path} line {_line(row)}: empty id")

    duplicated = np.flatnonzero(ids.duplicated().to_numpy())
    if len(duplicated):
        row = int(duplicated[0])
        raise IngestError(f"{path} line {_line(row)}: duplicate id "
            f"'{ids.iloc[row]}'")

    probs = _numeric(frame, 'p_treat', path)
    bad = np.flatnonzero((probs < 0) | (probs > 1))
    if len(bad):
        raise IngestError(f"{path} line {_line(bad[0])}: p_treat "
            f"{probs[bad[0]]} outside [0, 1]")

    z = _numeric(frame, 'z_obs', path)
    bad = np.flatnonzero(~np.isin(z, (0, 1)))
    if len(bad):
        raise IngestError(f"{path} line {_line(bad[0])}: z_obs must be 0 or "
            f"1, got {z[bad[0]]}")

    bad = np.flatnonzero(((z == 1) & (probs == 0)) | ((z == 0) &
        (probs == 1)))
    if len(bad):
        row = bad[0]
        raise IngestError(f"{path} line {_line(row)}: z_obs={int(z[row])} "
            f"impossible with p_treat={probs[row]}")

    return probs, z.astype(np.int8)


def ingest(nodes_path, edges_path=None, radius=None, restrict=False):
    """Reads the node table and either the edge table or a radius.

    :param restrict: in radius mode keep only pairs touching a unit with
        0 < p_treat < 1
    :returns: :class:`Dataset`
    """
    nodes = _read(nodes_path, NODE_REQUIRED, "node")
    probs, z = _check_nodes(nodes, nodes_path)
    ids = nodes['id'].tolist()
    index = {name: i for i, name in enumerate(ids)}

    coords = None
    if 'x' in nodes.columns and 'y' in nodes.columns:
        coords = np.column_stack([_numeric(nodes, 'x', nodes_path),
            _numeric(nodes, 'y', nodes_path)])

    y_post = _numeric(nodes, 'y_post', nodes_path)
    y_pre = _numeric(nodes, 'y_pre', nodes_path) if 'y_pre' in \
        nodes.columns else None

    known = set(NODE_REQUIRED) | set(NODE_OPTIONAL)
    covariate_names = [c for c in nodes.columns if c not in known]
    x = None
    if covariate_names:
        x = np.column_stack([_numeric(nodes, c, nodes_path)
            for c in covariate_names])

    design = BernoulliDesign(probs)
    try:
        if edges_path is not None:
            edges = _read(edges_path, EDGE_REQUIRED, "edge")
            pairs = []
            for row, (src, dst) in enumerate(zip(edges['src'],
                    edges['dst'])):
                if src not in index or dst not in index:
                    unknown = src if src not in index else dst
                    raise IngestError(f"{edges_path} line {_line(row)}: "
                        f"unknown node id '{unknown}'")
                if src == dst:
                    raise IngestError(f"{edges_path} line {_line(row)}: "
                        f"self-loop on '{src}'")
                pairs.append((index[src], index[dst]))

            net = build_network(len(ids), pairs, coords)
        elif radius is not None:
            if coords is None:
                raise IngestError("Radius mode needs x and y columns")
            restrict_pairs = hotspot_pairs(design.randomizable) if restrict \
                else None
            net = build_network(len(ids), coords=coords, radius=radius,
                restrict_pairs=restrict_pairs)
        else:
            raise IngestError("Need an edge table or a radius")
    except NetworkError as exc:
        raise IngestError(str(exc)) from exc

    data = ObservedData(z, y_post, y_pre, x, covariate_names)
    dataset = Dataset(net, design, data, ids)
    logger.info("Ingested %s", dataset)
    return dataset

# ===========================================================================

def node_frame(dataset):
    columns = {'id': dataset.ids}
    if dataset.net.coords is not None:
        columns['x'] = dataset.net.coords[:, 0]
        columns['y'] = dataset.net.coords[:, 1]

    columns['p_treat'] = dataset.design.probs
    columns['z_obs'] = dataset.data.z_obs.astype(int)
    columns['y_post'] = dataset.data.y_post
    if dataset.data.y_pre is not None:
        columns['y_pre'] = dataset.data.y_pre
    for k, name in enumerate(dataset.data.covariate_names):
        columns[name] = dataset.data.x[:, k]

    return pd.DataFrame(columns)


def edge_frame(dataset):
    ids = dataset.ids
    edges = sorted(dataset.net.edges())
    return pd.DataFrame({'src': [ids[i] for i, _ in edges],
        'dst': [ids[j] for _, j in edges]}, columns=EDGE_REQUIRED)


def export(dataset, nodes_path, edges_path):
    """Canonical node and edge tables: nodes in index order, each edge once
    with the lower index first, edges sorted."""
    node_frame(dataset).to_csv(nodes_path, index=False)
    edge_frame(dataset).to_csv(edges_path, index=False)

# ===========================================================================

def read_partition(path, dataset, column='part'):
    """Per-unit labels from an (id, `column`) table. Every unit must be
    labelled."""
    frame = _read(path, ['id', column], "partition")
    labels = np.full(len(dataset.ids), -1, dtype=np.int64)
    index = dataset.index
    for row, (name, value) in enumerate(zip(frame['id'], frame[column])):
        if name not in index:
            raise IngestError(f"{path} line {_line(row)}: unknown node id "
                f"'{name}'")
        labels[index[name]] = int(value)

    if (labels < 0).any():
        missing = dataset.ids[int(np.flatnonzero(labels < 0)[0])]
        raise IngestError(f"{path}: unit '{missing}' has no {column}")
    return labels


def write_partition(path, dataset, parts, communities=None):
    columns = {'id': dataset.ids, 'part': np.asarray(parts, dtype=int)}
    if communities is not None:
        columns['community'] = np.asarray(communities, dtype=int)
    pd.DataFrame(columns).to_csv(path, index=False)
