"""End-to-end tests of the propfit command line tool.

Usage: test_cli.py --cli PATH --samples DIR --schemas DIR
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import unittest

import jsonschema

ARGS = None


def run(*argv, check_code=None):
    proc = subprocess.run([ARGS.cli, *argv], capture_output=True, text=True, timeout=300)
    if check_code is not None and proc.returncode != check_code:
        raise AssertionError(
            f"exit {proc.returncode} != {check_code} for {argv}\nstdout:\n{proc.stdout}\nstderr:\n{proc.stderr}"
        )
    return proc


def schema(name):
    with open(os.path.join(ARGS.schemas, f"{name}.schema.json")) as f:
        return json.load(f)


def sample(*parts):
    return os.path.join(ARGS.samples, *parts)


class FitTests(unittest.TestCase):
    def fit_json(self, *argv):
        out = run("fit", *argv, "--format", "json", check_code=0).stdout
        doc = json.loads(out)
        jsonschema.validate(doc, schema("fit"))
        return doc

    def test_constant_model_closed_forms(self):
        doc = self.fit_json("--data", sample("data", "constant.csv"), "--model", "constant", "--method", "all")
        by = {m["method"]: m for m in doc["methods"]}
        self.assertAlmostEqual(by["QL"]["parameters"][0]["estimate"], 2.0, places=9)
        self.assertAlmostEqual(by["QL"]["sigma"], 0.5, places=9)
        self.assertAlmostEqual(by["WLS"]["parameters"][0]["estimate"], 14 / 6, places=9)
        self.assertAlmostEqual(by["DWLS"]["parameters"][0]["estimate"], 66 / 49, places=9)
        self.assertAlmostEqual(by["ML"]["sigma"], (1 / 6) ** 0.5, places=9)

    def test_exact_two_curve_data_give_reference_gamma(self):
        doc = self.fit_json("--data", sample("data", "partial_bleach_exact.csv"), "--mode", "separate")
        self.assertEqual(len(doc["curves"]), 2)
        for m in doc["methods"]:
            self.assertTrue(m["converged"], m["message"])
            self.assertAlmostEqual(m["gamma"], -87.45, places=4)
            self.assertAlmostEqual(m["equivalent_dose"]["estimate"], 87.45, places=4)

    def test_noisy_two_curve_data_with_config(self):
        doc = self.fit_json("--data", sample("data", "partial_bleach.csv"), "--config", sample("configs", "fit_partial_bleach.json"))
        self.assertEqual(doc["sigma_mode"], "common-sigma")
        by = {m["method"]: m for m in doc["methods"]}
        self.assertEqual(by["ML"]["fit_mode"], "common-sigma")
        for m in by.values():
            self.assertTrue(m["converged"])
            self.assertLess(m["equivalent_dose"]["bias"], 1.0)
            self.assertGreater(m["equivalent_dose"]["se"], 0.0)
            self.assertEqual(len(m["parameters"]), 6)

    def test_both_format_writes_text_and_json(self):
        with tempfile.TemporaryDirectory() as d:
            out = os.path.join(d, "report.txt")
            run("fit", "--data", sample("data", "decay.csv"), "--model", "exponential", "--format", "both", "--out", out, check_code=0)
            with open(out) as f:
                text = f.read()
            self.assertIn("Estimate", text)
            with open(out + ".json") as f:
                jsonschema.validate(json.load(f), schema("fit"))

    def test_text_matches_json(self):
        text = run("fit", "--data", sample("data", "constant.csv"), "--model", "constant", "--method", "ql", check_code=0).stdout
        self.assertIn("2.00", text)
        self.assertIn("0.500", text)


class ErrorTests(unittest.TestCase):
    def test_missing_required_flag(self):
        run("fit", check_code=2)

    def test_bad_csv(self):
        with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as f:
            f.write("x,y\n1,abc\n")
        try:
            proc = run("fit", "--data", f.name, check_code=2)
            self.assertIn("line 2", proc.stderr)
        finally:
            os.unlink(f.name)

    def test_unknown_config_key(self):
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as f:
            json.dump({"modle": {"name": "constant"}}, f)
        try:
            proc = run("fit", "--data", sample("data", "constant.csv"), "--config", f.name, check_code=2)
            self.assertIn("modle", proc.stderr)
        finally:
            os.unlink(f.name)

    def test_unknown_method(self):
        run("fit", "--data", sample("data", "constant.csv"), "--method", "ols", check_code=2)

    def test_no_method_converges(self):
        with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as f:
            f.write("x,y\n0,0\n0,1\n0,2\n")
        try:
            run("fit", "--data", f.name, "--model", "constant", "--method", "dwls", check_code=3)
        finally:
            os.unlink(f.name)


class SimulateTests(unittest.TestCase):
    def test_quick_partial_bleach_study(self):
        doc = json.loads(run("simulate", "--config", sample("configs", "simulate_quick.json"), "--replicates", "60",
                             "--format", "json", check_code=0).stdout)
        jsonschema.validate(doc, schema("simulation"))
        self.assertEqual(doc["table"]["quantity"], "gamma")
        self.assertTrue(doc["antithetic"])
        for c in doc["cells"]:
            self.assertEqual(c["R_effective"] + c["failure_count"] + c["rejected_count"], 60)

    def test_single_curve_study_and_seed_override(self):
        a = run("simulate", "--config", sample("configs", "simulate_decay.json"), "--replicates", "100", "--seed", "5",
                "--format", "json", check_code=0).stdout
        b = run("simulate", "--config", sample("configs", "simulate_decay.json"), "--replicates", "100", "--seed", "5",
                "--format", "json", "--threads", "3", check_code=0).stdout
        c = run("simulate", "--config", sample("configs", "simulate_decay.json"), "--replicates", "100", "--seed", "6",
                "--format", "json", check_code=0).stdout
        self.assertEqual(a, b)
        self.assertNotEqual(a, c)
        doc = json.loads(a)
        jsonschema.validate(doc, schema("simulation"))
        self.assertEqual(doc["seed"], 5)
        self.assertEqual(doc["quantities"], ["theta1", "theta2"])


class CheckTests(unittest.TestCase):
    def test_checks_pass(self):
        doc = json.loads(run("check", "--format", "json", check_code=0).stdout)
        jsonschema.validate(doc, schema("check"))
        self.assertTrue(doc["passed"])

    def test_wrong_gradient_is_detected(self):
        proc = run("check", "--inject-wrong-gradient", check_code=1)
        self.assertIn("FAIL", proc.stdout)


class ConfigSchemaTests(unittest.TestCase):
    def test_sample_configs_match_schema(self):
        for name in sorted(os.listdir(sample("configs"))):
            with open(sample("configs", name)) as f:
                jsonschema.validate(json.load(f), schema("config"))


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--cli", required=True)
    parser.add_argument("--samples", required=True)
    parser.add_argument("--schemas", required=True)
    ARGS, rest = parser.parse_known_args()
    unittest.main(argv=[sys.argv[0], *rest], verbosity=2)
