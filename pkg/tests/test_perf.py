import numpy as np
import pytest

from q8llm import (
    CONFIG_110M,
    CycleTableFormatError,
    EnergyProfile,
    PerfModelError,
    PipelineParams,
    ShapeError,
    analytic_matmul_cycles,
    builtin_cycle_table,
    calibrate_attention_multiplicity,
    calibrate_matmul_model,
    check_time_consistency,
    compose_forward_cycles,
    efficiency_report,
    energy_per_token_mwh,
    format_efficiency_report,
    forward_latency_ms,
    load_cycle_table,
    throughput_toks_per_s,
)

TABLE = builtin_cycle_table()


class TestCycleTable:
    def test_builtin_row_count(self):
        assert len(TABLE.rows) == 50

    def test_forward_row(self):
        assert TABLE.cycles("forward", "avg") == 4_377_403
        assert TABLE.cycles("forward", "best") == 4_160_107
        assert TABLE.cycles("forward", "worst") == 4_892_635

    def test_known_rows(self):
        assert TABLE.cycles("matmul_768_768_s") == 20_977
        assert TABLE.cycles("matmul_768_32000_s") == 864_311
        assert TABLE.cycles("rmsnorm_768_s") == 7_822

    def test_every_row_time_consistent(self):
        # cycles * 4 ns must match the printed absolute time of every row
        assert check_time_consistency(TABLE) == []

    def test_best_avg_worst_ordering(self):
        for row in TABLE.rows.values():
            assert row.best <= row.avg <= row.worst

    def test_file_roundtrip(self, tmp_path):
        path = tmp_path / "cycles.txt"
        lines = ["# custom table", "clock_period_ns 4.0"]
        lines += [f"{name} {r.best} {r.avg} {r.worst}"
                  for name, r in TABLE.rows.items()]
        path.write_text("\n".join(lines))
        loaded = load_cycle_table(path)
        assert loaded.clock_period_ns == 4.0
        for name, row in TABLE.rows.items():
            assert (loaded.rows[name].best, loaded.rows[name].avg,
                    loaded.rows[name].worst) == (row.best, row.avg, row.worst)

    def test_missing_forward_row_rejected(self, tmp_path):
        path = tmp_path / "cycles.txt"
        path.write_text("matmul_768_768_s 20977 20977 20977\n")
        with pytest.raises(CycleTableFormatError):
            load_cycle_table(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "cycles.txt"
        path.write_text("forward 1 2\n")
        with pytest.raises(CycleTableFormatError):
            load_cycle_table(path)


class TestLatency:
    def test_table_driven_forward_latency(self):
        assert round(forward_latency_ms(TABLE), 3) == 17.510

    def test_throughput_examples(self):
        assert throughput_toks_per_s(forward_latency_ms(TABLE)) == pytest.approx(
            57.11, abs=0.01
        )
        assert throughput_toks_per_s(9.34) == pytest.approx(107.07, abs=0.01)
        # derived GPU throughput agrees with the reported 107.00 within 0.1%
        assert abs(throughput_toks_per_s(9.34) - 107.00) / 107.00 < 1e-3
        assert throughput_toks_per_s(43.08) == pytest.approx(23.21, abs=0.01)

    def test_positive_latency_required(self):
        with pytest.raises(ValueError):
            throughput_toks_per_s(0.0)


class TestAnalyticMatmul:
    PARAMS = calibrate_matmul_model(TABLE)

    def test_reproduces_dim_x_dim(self):
        got = analytic_matmul_cycles(768, 768, self.PARAMS)
        assert abs(got - 20_977) / 20_977 < 0.05

    def test_reproduces_classifier_matmul(self):
        got = analytic_matmul_cycles(768, 32_000, self.PARAMS)
        assert abs(got - 864_311) / 864_311 < 0.05

    def test_doubling_rows_doubles_dominant_term(self):
        params = PipelineParams(per_row_overhead=15.0, fixed_overhead=0.0)
        assert analytic_matmul_cycles(768, 2048, params) == \
            2 * analytic_matmul_cycles(768, 1024, params)

    def test_non_divisible_d_in_rejected(self):
        with pytest.raises(ShapeError):
            analytic_matmul_cycles(100, 8, self.PARAMS)

    def test_default_knobs(self):
        params = PipelineParams()
        assert params.burst_width_values_per_cycle == 64
        assert params.initiation_interval == 1


class TestCompose:
    def test_endpoints_within_ten_percent(self):
        lo = compose_forward_cycles(CONFIG_110M, TABLE, 0)
        hi = compose_forward_cycles(CONFIG_110M, TABLE, CONFIG_110M.seq_len - 1)
        assert abs(lo - 4_160_107) / 4_160_107 < 0.10
        assert abs(hi - 4_892_635) / 4_892_635 < 0.10

    def test_monotone_in_pos(self):
        m = calibrate_attention_multiplicity(TABLE, CONFIG_110M)
        cycles = [compose_forward_cycles(CONFIG_110M, TABLE, pos, m)
                  for pos in range(0, CONFIG_110M.seq_len, 93)]
        assert all(a <= b for a, b in zip(cycles, cycles[1:]))

    def test_missing_rows_raise_model_error(self, tmp_path):
        path = tmp_path / "cycles.txt"
        path.write_text("forward 4160107 4377403 4892635\n")
        table = load_cycle_table(path)
        with pytest.raises(PerfModelError):
            compose_forward_cycles(CONFIG_110M, table, 0, attention_multiplicity=1)

    def test_pos_out_of_range(self):
        with pytest.raises(PerfModelError):
            compose_forward_cycles(CONFIG_110M, TABLE, CONFIG_110M.seq_len)

    def test_compose_tracks_table_mode(self):
        # mean per-token compose cost stays within the calibration band
        cycles = [compose_forward_cycles(CONFIG_110M, TABLE, pos)
                  for pos in range(0, 256)]
        latency = np.mean(cycles) * TABLE.clock_period_ns / 1e6
        assert abs(latency - forward_latency_ms(TABLE)) / forward_latency_ms(TABLE) < 0.10


class TestEnergy:
    def test_fpga_energy(self):
        e = energy_per_token_mwh(EnergyProfile("FPGA", 9.0), 17.51)
        assert e == pytest.approx(0.0438, abs=5e-5)
        assert round(e, 2) == 0.04

    def test_cpu_energy(self):
        e = energy_per_token_mwh(EnergyProfile("CPU", 42.5), 43.08)
        assert e == pytest.approx(0.5086, abs=5e-5)
        assert round(e, 2) == 0.51

    def test_gpu_energy(self):
        e = energy_per_token_mwh(EnergyProfile("GPU", 126.9), 9.34)
        assert e == pytest.approx(0.3292, abs=5e-5)
        assert round(e, 2) == 0.33

    def test_bilinear(self, rng):
        p = float(rng.uniform(1, 100))
        lat = float(rng.uniform(1, 100))
        base = energy_per_token_mwh(EnergyProfile("d", p), lat)
        assert energy_per_token_mwh(EnergyProfile("d", 2 * p), lat) == pytest.approx(2 * base)
        assert energy_per_token_mwh(EnergyProfile("d", p), 2 * lat) == pytest.approx(2 * base)

    def test_positive_power_required(self):
        with pytest.raises(ValueError):
            EnergyProfile("bad", 0.0)


class TestReport:
    PROFILES = [EnergyProfile("FPGA", 9.0), EnergyProfile("CPU", 42.5),
                EnergyProfile("GPU", 126.9)]
    LATENCIES = [forward_latency_ms(TABLE), 43.08, 9.34]

    def test_headline_ratios(self):
        rep = efficiency_report(self.PROFILES, self.LATENCIES, baseline="FPGA")
        assert rep["ratios"]["CPU"]["energy_vs_baseline"] == 12.75
        assert rep["ratios"]["GPU"]["energy_vs_baseline"] == 8.25
        assert rep["ratios"]["CPU"]["baseline_speedup"] == 2.46
        assert rep["ratios"]["GPU"]["baseline_speedup"] == 0.53

    def test_long_generation_ratios(self):
        rep = efficiency_report(
            [EnergyProfile("FPGA", 9.0), EnergyProfile("CPU", 42.5),
             EnergyProfile("GPU", 130.6)],
            [forward_latency_ms(TABLE), 50.94, 9.32],
            baseline="FPGA",
        )
        assert rep["devices"]["CPU"]["mwh_per_token_2dp"] == 0.60
        assert rep["devices"]["GPU"]["mwh_per_token_2dp"] == 0.34
        assert rep["ratios"]["CPU"]["energy_vs_baseline"] == 15.0
        assert rep["ratios"]["GPU"]["energy_vs_baseline"] == 8.5

    def test_default_baseline_is_lowest_energy(self):
        rep = efficiency_report(self.PROFILES, self.LATENCIES)
        assert rep["baseline"] == "FPGA"

    def test_stable_keys(self):
        rep = efficiency_report(self.PROFILES, self.LATENCIES, baseline="FPGA")
        assert set(rep) == {"baseline", "devices", "ratios"}
        for dev in rep["devices"].values():
            assert set(dev) == {"avg_power_watts", "latency_ms", "toks_per_s",
                                "mwh_per_token", "mwh_per_token_2dp"}

    def test_needs_two_devices(self):
        with pytest.raises(ValueError):
            efficiency_report([self.PROFILES[0]], [17.51])

    def test_sub_millisecond_baseline_still_reports(self):
        # rounded baseline energy collapses to 0.00; raw values take over
        rep = efficiency_report(
            [EnergyProfile("FPGA", 9.0), EnergyProfile("CPU", 42.5)],
            [0.0004, 43.08],
        )
        assert rep["devices"]["FPGA"]["mwh_per_token_2dp"] == 0.0
        assert rep["ratios"]["CPU"]["energy_vs_baseline"] > 0

    def test_text_rendering(self):
        rep = efficiency_report(self.PROFILES, self.LATENCIES, baseline="FPGA")
        text = format_efficiency_report(rep)
        assert "12.75x" in text and "0.53x" in text
