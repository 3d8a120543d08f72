import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from core.ingest import (IngestError, export, ingest, read_partition,
    write_partition)

NODES = settings.DATA_DIR / 'toy_nodes.csv'
EDGES = settings.DATA_DIR / 'toy_edges.csv'

HEADER = "id,x,y,p_treat,z_obs,y_post\n"


class IngestTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return path

    def test_toy(self):
        dataset = ingest(NODES, EDGES)
        self.assertEqual(dataset.net.n, 12)
        self.assertEqual(dataset.net.n_edges, 14)
        self.assertEqual(dataset.ids[0], "n01")
        self.assertEqual(dataset.design.randomizable, {0, 4, 8, 11})
        self.assertEqual(dataset.data.z_obs.tolist(),
            [1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0])
        self.assertEqual(dataset.data.covariate_names, ['length'])
        self.assertAlmostEqual(dataset.data.y_pre[0], 2.6)
        self.assertEqual(dataset.lookup(["n02", "n12"]), [1, 11])
        self.assertEqual(dataset.net.coords.shape, (12, 2))

        with self.assertRaises(IngestError):
            dataset.lookup(["n99"])

    def test_export(self):
        dataset = ingest(NODES, EDGES)
        nodes, edges = self.dir / 'nodes.csv', self.dir / 'edges.csv'
        export(dataset, nodes, edges)

        again = ingest(nodes, edges)
        self.assertEqual(again.ids, dataset.ids)
        self.assertEqual(again.net.edges(), dataset.net.edges())
        np.testing.assert_array_equal(again.design.probs,
            dataset.design.probs)
        np.testing.assert_array_equal(again.data.y_post, dataset.data.y_post)
        self.assertEqual(again.data.covariate_names, ['length'])

        # canonical: exporting twice gives identical files
        first = edges.read_text()
        export(again, nodes, edges)
        self.assertEqual(edges.read_text(), first)

    def test_radius(self):
        nodes = self.write('nodes.csv', HEADER + "a,0,0,0.5,0,1.0\n"
            "b,3,0,0,0,2.0\nc,7,0,0,0,3.0\n")
        dataset = ingest(nodes, radius=4)
        self.assertEqual(dataset.net.edges(), [(0, 1), (1, 2)])

        dataset = ingest(nodes, radius=4, restrict=True)
        self.assertEqual(dataset.net.edges(), [(0, 1)])

    def test_node_errors(self):
        cases = [
            ("a,0,0,0.5,0,1\nb,0,0,1.2,0,1\n", "line 3: p_treat"),
            ("a,0,0,0.5,0,1\na,0,0,0.5,0,1\n", "line 3: duplicate id"),
            ("a,0,0,0.5,2,1\n", "line 2: z_obs must be 0 or 1"),
            ("a,0,0,0.0,1,1\n", "line 2: z_obs=1 impossible"),
            ("a,0,0,0.5,0,oops\n", "line 2: y_post value 'oops'"),
        ]
        for rows, message in cases:
            nodes = self.write('nodes.csv', HEADER + rows)
            with self.assertRaisesMessage(IngestError, message):
                ingest(nodes, radius=1)

        nodes = self.write('nodes.csv', "id,p_treat,z_obs\na,0.5,0\n")
        with self.assertRaisesMessage(IngestError, "missing column(s) y_post"):
            ingest(nodes, radius=1)

    def test_edge_errors(self):
        nodes = self.write('nodes.csv', HEADER + "a,0,0,0.5,0,1\n"
            "b,1,0,0,0,2\n")
        for rows, message in [("a,b\na,z\n", "line 3: unknown node id 'z'"),
                ("b,b\n", "line 2: self-loop")]:
            edges = self.write('edges.csv', "src,dst\n" + rows)
            with self.assertRaisesMessage(IngestError, message):
                ingest(nodes, edges)

        with self.assertRaises(IngestError):
            ingest(nodes)

    def test_partition(self):
        dataset = ingest(NODES, EDGES)
        parts = np.arange(12) % 3
        path = self.dir / 'parts.csv'
        write_partition(path, dataset, parts, communities=np.arange(12))

        self.assertEqual(read_partition(path, dataset).tolist(),
            parts.tolist())
        self.assertEqual(read_partition(path, dataset, 'community').tolist(),
            list(range(12)))

        short = self.write('short.csv', "id,part\nn01,0\n")
        with self.assertRaisesMessage(IngestError, "unit 'n02' has no part"):
            read_partition(short, dataset)
