#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# CLI MODULE v1.0
# CODEX: This module handles the command-line interface for the CureNet application.
# CODEX: Every handler reads the resolved configuration, runs one pipeline stage and writes its artifacts.

import logging
import os

import numpy as np
import pandas as pd
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src.cure_sim import (DeformationParams, KineticsParams, ProfileAnchors, build_profile,
                          default_A_grid, generate_dataset, load_dataset, output_times,
                          sample_profile, sensor_times, write_dataset)
from src.deeponet import init_model, load_model, predict_trajectory, save_model
from src.eki import (EkiConfig, bands_frame, eki_train, eki_transfer, ensemble_models,
                     predict_bands, save_particles)
from src.errors import CureNetError
from src.optimize import OptProblem, SurrogateEvaluator, optimize, verify_with_simulator, write_result
from src.train import (build_training_set, evaluate, fit, fit_ensemble, load_ensemble,
                       save_ensemble)
from src.transfer import (experiment_times, fine_tune, fine_tune_ensemble, load_experiment,
                          resample_experiment, synthetic_experiment, write_experiment)
from src.utils import create_directories, require_path, write_csv, write_json

PREDICTION_COLUMNS = ["time_min", "doc", "log_visc_lnPaS", "deformation_mm"]


class CLIManager:
    """
    CODEX: Class to manage CLI interactions and display results.
    CODEX: Handlers raise CureNetError subclasses; the entry script maps them to exit codes.
    """

    def __init__(self, config, console=None):
        """
        CODEX: Initialize the CLI manager.

        Args:
            config (ConfigManager): Resolved configuration (CLI overrides already applied)
            console (rich.console.Console, optional): Console for output
        """
        self.config = config
        self.console = console or Console()
        self.logger = logging.getLogger(__name__)

    # =================================================================
    # SHARED PLUMBING
    # =================================================================

    def _physics(self):
        return (ProfileAnchors(**self.config.get_anchors_config()),
                KineticsParams(**self.config.get_kinetics_config()),
                DeformationParams(**self.config.get_deformation_config()))

    def _output_dir(self, name, path=None):
        """
        CODEX: Create the command's output directory and drop the resolved config into it.
        """
        out_dir = create_directories(path or os.path.join(self.config.get("output_dir"), name))
        self.config.save_resolved(os.path.join(out_dir, "resolved_config.json"))
        return out_dir

    def _input(self, key, default):
        path = self.config.get(key) or os.path.join(self.config.get("output_dir"), *default)
        return require_path(path, key.replace("_path", ""))

    def _training_set(self):
        dataset = load_dataset(self._input("dataset_path", ("dataset",)))
        training = self.config.get_training_config()
        return dataset, build_training_set(dataset, training["val_fraction"], self.config.get("seed"))

    def _spinner(self, message, color="green"):
        return Progress(
            SpinnerColumn(),
            TextColumn(f"[bold {color}]{message}[/bold {color}]"),
            console=self.console,
            transient=True,
        )

    def _parameters_panel(self, title, rows, color="green"):
        body = "\n".join(f"{name}: [cyan]{value}[/cyan]" for name, value in rows)
        self.console.print(Panel(body, title=title, border_style=color))

    def _query(self, args):
        """
        CODEX: Prediction query A = (t1, T1) and doc0; flags win over the prediction section.
        """
        query = self.config.get_prediction_config()
        for key in ("t1", "T1", "doc0"):
            value = getattr(args, key, None)
            if value is not None:
                query[key] = float(value)
        return query

    def _run(self, command, action):
        try:
            return action()
        except CureNetError as e:
            self.logger.error(f"Error handling {command} command: {str(e)}")
            raise

    # =================================================================
    # COMMAND HANDLERS
    # =================================================================

    def handle_generate_command(self, args):
        """
        CODEX: Handle the 'generate' command.
        CODEX: Simulate the design grid and write the dataset plus a synthetic hold-out experiment.

        Args:
            args (argparse.Namespace): Command arguments

        Returns:
            str: Dataset manifest path
        """
        return self._run("generate", self._generate)

    def _generate(self):
        anchors, kp, dp = self._physics()
        sim = self.config.get_simulation_config()
        ds = self.config.get_dataset_config()
        A_grid = default_A_grid(anchors, sim["margin"], ds["grid_t"], ds["grid_T"])
        self._parameters_panel("Dataset Parameters", [
            ("Design grid", f"{ds['grid_t']} x {ds['grid_T']}"),
            ("Initial DoC values", ds["doc0_values"]),
            ("Time step", f"{sim['dt']} min"),
            ("Workers", self.config.get("workers")),
        ])
        out_dir = self._output_dir("dataset", self.config.get("dataset_path"))

        with self._spinner("Simulating cure cycles...") as progress:
            progress.add_task("Simulating", total=None)
            dataset = generate_dataset(A_grid, ds["doc0_values"], kp, dp, sim["dt"], sim["sensor_count"],
                                       sim["n_out"], anchors, sim["margin"], self.config.get("workers"))
            manifest_path = write_dataset(dataset, out_dir)

            profile = build_profile(ds["holdout_t1"], ds["holdout_T1"], anchors, sim["margin"])
            holdout = synthetic_experiment(profile, ds["holdout_doc0"], kp, dp, scale=ds["holdout_scale"],
                                           dt=sim["dt"], label="synthetic_holdout")
            experiments_dir = create_directories(os.path.join(self.config.get("output_dir"), "experiments"))
            write_experiment(holdout, os.path.join(experiments_dir, "synthetic_holdout.csv"))

        table = Table(title="Generated Dataset")
        table.add_column("Item", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("Records", str(len(dataset)))
        table.add_row("Skipped grid points", str(len(dataset.skipped)))
        table.add_row("Manifest", manifest_path)
        table.add_row("Hold-out record", f"u = {holdout.terminal_deformation:.4f} mm")
        self.console.print(table)
        self.logger.info(f"Dataset with {len(dataset)} records written to {out_dir}")
        return manifest_path

    def handle_train_command(self, args):
        """
        CODEX: Handle the 'train' command: fit one FiLM-DeepONet with Adam.

        Args:
            args (argparse.Namespace): Command arguments

        Returns:
            str: Model file path
        """
        return self._run("train", self._train)

    def _train(self):
        _, tset = self._training_set()
        training = self.config.get_training_config()
        architecture = self.config.get_network_config()
        self._parameters_panel("Training Parameters", [
            ("Records (train / val)", f"{len(tset.train_idx)} / {len(tset.val_idx)}"),
            ("Architecture", architecture),
            ("Iterations", training["max_iterations"]),
            ("Learning rate", training["learning_rate"]),
        ], color="blue")
        out_dir = self._output_dir("model")

        with self._spinner("Training operator network...", "blue") as progress:
            progress.add_task("Training", total=None)
            model = init_model(architecture, tset.sensor_count, tset.normalization, self.config.get("seed"))
            model, history = fit(model, tset, training)

        model_path = os.path.join(out_dir, "model.json")
        save_model(model, model_path)
        write_csv(history, os.path.join(out_dir, "history.csv"))
        errors = evaluate(model, tset, tset.val_idx) if len(tset.val_idx) else {}
        write_json({"validation_relative_l2": errors}, os.path.join(out_dir, "metrics.json"))
        self._display_errors("Validation Relative L2", errors)
        return model_path

    def handle_ensemble_command(self, args):
        """
        CODEX: Handle the 'ensemble' command: one member per configured seed.
        """
        return self._run("ensemble", self._ensemble)

    def _ensemble(self):
        _, tset = self._training_set()
        seeds = self.config.get_ensemble_config()["seeds"]
        self._parameters_panel("Ensemble Parameters", [
            ("Seeds", seeds),
            ("Workers", self.config.get("workers")),
        ], color="blue")
        out_dir = self._output_dir("ensemble")

        with self._spinner(f"Training {len(seeds)} ensemble members...", "blue") as progress:
            progress.add_task("Training", total=None)
            result = fit_ensemble(tset, self.config.get_network_config(), self.config.get_training_config(),
                                  seeds, self.config.get("workers"))
        save_ensemble(result, out_dir, tset)
        for seed, history in result.histories.items():
            write_csv(history, os.path.join(out_dir, f"history_seed{seed}.csv"))

        table = Table(title="Ensemble Members")
        table.add_column("Seed", style="cyan")
        table.add_column("Status", style="green")
        table.add_column("Best val loss", style="yellow")
        for seed in result.seeds:
            if seed in result.failures:
                table.add_row(str(seed), "[red]failed[/red]", result.failures[seed])
            else:
                table.add_row(str(seed), "trained", f"{result.histories[seed]['val_loss'].min():.4e}")
        self.console.print(table)
        return out_dir

    def handle_eki_train_command(self, args):
        """
        CODEX: Handle the 'eki-train' command: derivative-free training of the small architecture.
        """
        return self._run("eki-train", self._eki_train)

    def _eki_train(self):
        _, tset = self._training_set()
        seed = self.config.get("seed")
        eki_config = EkiConfig.from_config(self.config.get_eki_config(), seed)
        self._parameters_panel("EKI Parameters", [
            ("Ensemble size", eki_config.ensemble_size),
            ("Iterations", eki_config.iterations),
            ("q / r", f"{eki_config.q} / {eki_config.r}"),
        ], color="magenta")
        out_dir = self._output_dir("eki")

        with self._spinner("Running ensemble Kalman inversion...", "magenta") as progress:
            progress.add_task("EKI", total=None)
            template = init_model(self.config.get_eki_network_config(), tset.sensor_count,
                                  tset.normalization, seed)
            result = eki_train(template, tset, eki_config, self.config.get("workers"))
            models = ensemble_models(result.ensemble, template)
        save_particles(models, out_dir, result.history)

        final = result.history.iloc[-1]
        self.console.print(f"[bold green]Final mean misfit:[/bold green] {final['mean_misfit']:.5e} "
                           f"(spread {final['ensemble_spread']:.3e})")
        return out_dir

    def handle_transfer_command(self, args):
        """
        CODEX: Handle the 'transfer' command: last-layer fine-tuning on a measured cycle.
        CODEX: Uses the ensemble when ensemble_path is set, the single model otherwise.
        """
        return self._run("transfer", self._transfer)

    def _transfer(self):
        rec = load_experiment(self._input("record_path", ("experiments", "synthetic_holdout.csv")))
        transfer = self.config.get_transfer_config()
        out_dir = self._output_dir("transfer")
        self._parameters_panel("Transfer Parameters", [
            ("Experiment", rec.label),
            ("Measured deformation", f"{rec.terminal_deformation:.4f} mm"),
            ("Anchor weight", transfer["lambda_anchor"]),
        ], color="yellow")

        if self.config.get("ensemble_path"):
            models = load_ensemble(self._input("ensemble_path", ("ensemble",)))
            with self._spinner("Fine-tuning ensemble members...", "yellow") as progress:
                progress.add_task("Fine-tuning", total=None)
                outcome = fine_tune_ensemble(models, rec, transfer, self.config.get("workers"))
            members = []
            for index, member in enumerate(outcome.results):
                name = f"model_{index:02d}.json"
                save_model(member.model, os.path.join(out_dir, name))
                members.append({"file": name, "terminal_before": member.terminal_before,
                                "terminal_after": member.terminal_after, "converged": member.converged})
            write_json({"format": "curenet-ensemble", "version": 1, "members": members,
                        "failures": {str(k): v for k, v in outcome.failures.items()}},
                       os.path.join(out_dir, "manifest.json"))
            if outcome.stats_after is not None:
                write_csv(self._stats_frame(outcome.stats_after), os.path.join(out_dir, "prediction_bands.csv"))
            self.console.print(f"[bold green]Fine-tuned {len(outcome.results)} of {len(models)} members[/bold green]")
            return out_dir

        model = load_model(self._input("model_path", ("model", "model.json")))
        with self._spinner("Fine-tuning final branch layer...", "yellow") as progress:
            progress.add_task("Fine-tuning", total=None)
            result = fine_tune(model, rec, transfer)
        save_model(result.model, os.path.join(out_dir, "model.json"))
        write_csv(self._prediction_frame(result.prediction), os.path.join(out_dir, "prediction.csv"))
        write_json({
            "label": rec.label,
            "target_mm": result.target,
            "terminal_before_mm": result.terminal_before,
            "terminal_after_mm": result.terminal_after,
            "iterations": result.iterations,
            "converged": result.converged,
        }, os.path.join(out_dir, "result.json"))

        table = Table(title="Transfer Result")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("Target", f"{result.target:.4f} mm")
        table.add_row("Before", f"{result.terminal_before:.4f} mm")
        table.add_row("After", f"{result.terminal_after:.4f} mm")
        table.add_row("Converged", "Yes" if result.converged else "[red]No[/red]")
        self.console.print(table)
        return out_dir

    def handle_eki_transfer_command(self, args):
        """
        CODEX: Handle the 'eki-transfer' command: Tikhonov-regularized EKI over the final branch layer.
        """
        return self._run("eki-transfer", self._eki_transfer)

    def _eki_transfer(self):
        rec = load_experiment(self._input("record_path", ("experiments", "synthetic_holdout.csv")))
        models = load_ensemble(self._input("ensemble_path", ("eki",)))
        section = self.config.get_eki_transfer_config()
        eki_config = EkiConfig.from_config(section, self.config.get("seed"), ensemble_size=len(models))
        out_dir = self._output_dir("eki_transfer")
        self._parameters_panel("EKI Transfer Parameters", [
            ("Experiment", rec.label),
            ("Particles", len(models)),
            ("Tikhonov weight", eki_config.lambda_tik),
        ], color="magenta")

        with self._spinner("Adapting particles...", "magenta") as progress:
            progress.add_task("EKI transfer", total=None)
            result = eki_transfer(models, rec, eki_config)
        save_particles(result.models, out_dir, result.history)

        branch_input = resample_experiment(rec, models[0].sensor_count)
        bands = predict_bands(result.models, branch_input[:-1], rec.doc0, experiment_times(rec),
                              t_origin=rec.t_start, horizon=rec.duration)
        write_csv(bands_frame(bands), os.path.join(out_dir, "bands.csv"))
        write_json({
            "label": rec.label,
            "target_mm": result.target,
            "terminal_before_mean_mm": float(np.mean(result.terminal_before)),
            "terminal_before_std_mm": float(np.std(result.terminal_before)),
            "terminal_after_mean_mm": float(np.mean(result.terminal_after)),
            "terminal_after_std_mm": float(np.std(result.terminal_after)),
        }, os.path.join(out_dir, "result.json"))
        self.console.print(f"[bold green]Terminal deformation:[/bold green] "
                           f"{np.mean(result.terminal_before):.4f} -> {np.mean(result.terminal_after):.4f} mm "
                           f"(target {result.target:.4f})")
        return out_dir

    def handle_predict_command(self, args):
        """
        CODEX: Handle the 'predict' command: one model, one cure cycle, full histories.
        """
        return self._run("predict", lambda: self._predict(args))

    def _predict(self, args):
        anchors, _, _ = self._physics()
        margin = self.config.get_simulation_config()["margin"]
        query = self._query(args)
        model = load_model(self._input("model_path", ("model", "model.json")))
        profile = build_profile(query["t1"], query["T1"], anchors, margin)
        T_samples = sample_profile(profile, sensor_times(anchors, model.sensor_count))
        times = output_times(anchors, query["n_times"])
        prediction = predict_trajectory(model, T_samples, query["doc0"], times)

        out_dir = self._output_dir("predict")
        path = os.path.join(out_dir, "prediction.csv")
        write_csv(self._prediction_frame(prediction), path)
        self.console.print(Panel(
            f"A = ([cyan]{query['t1']}[/cyan] min, [cyan]{query['T1']}[/cyan] C), doc0 = [cyan]{query['doc0']}[/cyan]\n"
            f"Final DoC: [green]{prediction.doc_hat[-1]:.4f}[/green]\n"
            f"Final deformation: [green]{prediction.deformation_hat[-1]:.4f} mm[/green]",
            title="Prediction",
            border_style="green",
        ))
        return path

    def handle_bands_command(self, args):
        """
        CODEX: Handle the 'bands' command: pointwise ensemble mean and std per channel.
        """
        return self._run("bands", lambda: self._bands(args))

    def _bands(self, args):
        anchors, _, _ = self._physics()
        margin = self.config.get_simulation_config()["margin"]
        query = self._query(args)
        models = load_ensemble(self._input("ensemble_path", ("ensemble",)))
        profile = build_profile(query["t1"], query["T1"], anchors, margin)
        T_samples = sample_profile(profile, sensor_times(anchors, models[0].sensor_count))
        times = output_times(anchors, query["n_times"])
        bands = predict_bands(models, T_samples, query["doc0"], times, trajectories=query["trajectories"])

        out_dir = self._output_dir("bands")
        path = os.path.join(out_dir, "bands.csv")
        write_csv(bands_frame(bands), path)
        if bands.trajectories is not None:
            rows = [
                {"member": j, "time_min": t, "doc": traj[0, p], "log_visc_lnPaS": traj[1, p],
                 "deformation_mm": traj[2, p]}
                for j, traj in enumerate(bands.trajectories) for p, t in enumerate(bands.times)
            ]
            write_csv(pd.DataFrame(rows), os.path.join(out_dir, "trajectories.csv"))
        self.console.print(f"[bold green]Bands from {len(models)} members written to[/bold green] {path}")
        return path

    def handle_optimize_command(self, args):
        """
        CODEX: Handle the 'optimize' command: surrogate-driven search for the intermediate point A.
        """
        return self._run("optimize", self._optimize)

    def _optimize(self):
        anchors, kp, dp = self._physics()
        sim = self.config.get_simulation_config()
        opt = self.config.get_optimization_config()
        problem = OptProblem(anchors=anchors, margin=sim["margin"], doc_min=opt["doc_min"], doc0=opt["doc0"],
                             n_t=opt["n_t"], n_T=opt["n_T"], refine_rounds=opt["refine_rounds"],
                             refine_points=opt["refine_points"])
        evaluator = SurrogateEvaluator(load_model(self._input("model_path", ("model", "model.json"))))
        evaluator.check(problem)
        self._parameters_panel("Optimization Parameters", [
            ("Grid", f"{problem.n_t} x {problem.n_T}"),
            ("Full cure threshold", problem.doc_min),
            ("Initial DoC", problem.doc0),
        ], color="cyan")
        out_dir = self._output_dir("optimize")

        with self._spinner("Searching cure schedules...", "cyan") as progress:
            progress.add_task("Optimizing", total=None)
            result = optimize(evaluator, problem)
            if opt["verify"]:
                verify_with_simulator(result, problem, kp, dp, sim["dt"])
        write_result(result, os.path.join(out_dir, "map.csv"), os.path.join(out_dir, "result.json"), problem)
        self._display_optimum(result)
        return out_dir

    # =================================================================
    # DISPLAY
    # =================================================================

    @staticmethod
    def _prediction_frame(prediction):
        return pd.DataFrame({
            "time_min": prediction.times,
            "doc": prediction.doc_hat,
            "log_visc_lnPaS": prediction.log_visc_hat,
            "deformation_mm": prediction.deformation_hat,
        }, columns=PREDICTION_COLUMNS)

    @staticmethod
    def _stats_frame(stats):
        data = {"time_min": stats.times}
        for c, name in enumerate(PREDICTION_COLUMNS[1:]):
            data[f"{name}_mean"] = stats.mean[c]
            data[f"{name}_std"] = stats.std[c]
        return pd.DataFrame(data)

    def _display_errors(self, title, errors):
        table = Table(title=title)
        table.add_column("Channel", style="cyan")
        table.add_column("Error", style="green")
        for channel, value in errors.items():
            table.add_row(channel, f"{100.0 * value:.2f}%")
        self.console.print(table)

    def _display_optimum(self, result):
        if not result.feasible:
            self.console.print("[bold red]No feasible cure schedule on the grid.[/bold red]")
            return
        table = Table(title="Optimal Cure Schedule")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("t1", f"{result.best[0]:.2f} +/- {result.uncertainty[0]:.2f} min")
        table.add_row("T1", f"{result.best[1]:.2f} +/- {result.uncertainty[1]:.2f} C")
        table.add_row("Final DoC", f"{result.doc_final:.4f}")
        table.add_row("Deformation", f"{result.deformation:.4f} mm")
        if result.verification is not None:
            check = result.verification
            table.add_row("Simulator check",
                          f"{'feasible' if check['feasible'] else '[red]infeasible[/red]'}, "
                          f"u = {check['deformation_mm']:.4f} mm")
        self.console.print(table)
