//! Python bindings for `popbias_core`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use popbias_core::dataset::{self as ds, density, k_core_filter, sample_users, split_train_test};
use popbias_core::recsys::{self, Algorithm, DatasetKind, Hyperparams};
use popbias_core::report;
use popbias_core::simulator::{self, SimulationConfig};
use popbias_core::{metrics, RatingScale};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "InteractionLog", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLog(popbias_core::InteractionLog);

#[pymethods]
impl PyLog {
    #[staticmethod]
    #[pyo3(signature = (triples, min_rating = 1.0, max_rating = 5.0))]
    fn from_triples(triples: Vec<(u32, u32, f64)>, min_rating: f64, max_rating: f64) -> PyResult<Self> {
        let scale = RatingScale::new(min_rating, max_rating).map_err(err)?;
        popbias_core::InteractionLog::from_triples(triples, scale).map(PyLog).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        ds::read_interactions_csv(&path, RatingScale::FIVE_STAR).map(PyLog).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.0.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    fn density(&self) -> PyResult<f64> {
        density(&self.0).map_err(err)
    }

    fn content_hash(&self) -> String {
        self.0.content_hash()
    }

    /// `(user, item, rating, iteration)` rows in log order.
    fn rows(&self) -> Vec<(u32, u32, f64, u32)> {
        self.0
            .interactions()
            .iter()
            .map(|i| (i.user, i.item, i.rating, i.iteration))
            .collect()
    }

    fn k_core(&self, k: usize) -> Self {
        PyLog(k_core_filter(&self.0, k))
    }

    fn sample_users(&self, n: usize, seed: u64) -> Self {
        PyLog(sample_users(&self.0, n, seed))
    }

    #[pyo3(signature = (test_fraction = 0.2, seed = 0))]
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (train, test) = split_train_test(&self.0, test_fraction, seed).map_err(err)?;
        Ok((PyLog(train), PyLog(test)))
    }

    fn __repr__(&self) -> String {
        format!(
            "InteractionLog({} ratings, {} users, {} items)",
            self.0.len(),
            self.0.n_users(),
            self.0.n_items()
        )
    }
}

#[pyclass(name = "GroupAssignment", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGroups(popbias_core::GroupAssignment);

#[pymethods]
impl PyGroups {
    #[staticmethod]
    fn from_pairs(pairs: Vec<(u32, String)>) -> PyResult<Self> {
        popbias_core::GroupAssignment::from_pairs(pairs).map(PyGroups).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        ds::load_groups(&path).map(PyGroups).map_err(err)
    }

    fn label(&self, user: u32) -> Option<String> {
        self.0.label(user).map(str::to_owned)
    }

    fn labels(&self) -> Vec<String> {
        self.0.labels().into_iter().map(str::to_owned).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Parses `ratings.dat` and `users.dat`; returns the log and gender groups.
#[pyfunction]
fn load_movielens(ratings: PathBuf, users: PathBuf) -> PyResult<(PyLog, PyGroups)> {
    let (log, groups) = ds::parse_movielens(&ratings, &users).map_err(err)?;
    Ok((PyLog(log), PyGroups(groups)))
}

#[pyfunction]
fn gini(values: Vec<f64>) -> PyResult<f64> {
    metrics::gini(&values).map_err(err)
}

#[pyfunction]
fn popularity(log: &PyLog) -> PyResult<BTreeMap<u32, f64>> {
    Ok(metrics::popularity_scores(&log.0).map_err(err)?.iter().collect())
}

#[pyfunction]
fn within_group_gini(log: &PyLog, groups: &PyGroups) -> PyResult<BTreeMap<String, f64>> {
    Ok(metrics::within_group_gini(&log.0, &groups.0)
        .map_err(err)?
        .into_iter()
        .collect())
}

#[pyfunction]
fn delta_gap(gap_p: f64, gap_r: f64) -> PyResult<f64> {
    metrics::delta_gap(metrics::GapPair::new(gap_p, gap_r)).map_err(err)
}

#[pyfunction]
fn delta_gap_revised(gap_p: f64, gap_r: f64) -> PyResult<f64> {
    metrics::delta_gap_revised(metrics::GapPair::new(gap_p, gap_r)).map_err(err)
}

#[pyfunction]
fn between_group_gap(dg_g: f64, dg_h: f64) -> PyResult<f64> {
    metrics::between_group_gap(dg_g, dg_h).map_err(err)
}

fn hyperparams(algorithm: &str, dataset: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Hyperparams> {
    let algorithm: Algorithm = algorithm.parse().map_err(err)?;
    let kind: DatasetKind = dataset.parse().map_err(err)?;
    let mut p = Hyperparams::tuned(algorithm, kind);
    if let Some(overrides) = overrides {
        for (key, value) in overrides.iter() {
            let key: String = key.extract()?;
            match key.as_str() {
                "epochs" => p.epochs = value.extract()?,
                "factors" => p.factors = value.extract()?,
                "learning_rate" => p.learning_rate = value.extract()?,
                "regularization" => p.regularization = value.extract()?,
                "k_neighbors" => p.k_neighbors = value.extract()?,
                "train_seed" => p.train_seed = value.extract()?,
                other => return Err(PyValueError::new_err(format!("unknown hyperparameter {other:?}"))),
            }
        }
    }
    p.validate().map_err(err)?;
    Ok(p)
}

#[pyclass(name = "RatingModel", frozen)]
struct PyModel(recsys::RatingModel);

#[pymethods]
impl PyModel {
    /// Trains `algorithm` (svd, nmf, user_knn, item_knn) with the tuned
    /// hyperparameters for `dataset`; keyword arguments override them.
    #[staticmethod]
    #[pyo3(signature = (log, algorithm, dataset = "movielens", **overrides))]
    fn train(
        log: &PyLog,
        algorithm: &str,
        dataset: &str,
        overrides: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let params = hyperparams(algorithm, dataset, overrides)?;
        recsys::train(&params, &log.0).map(PyModel).map_err(err)
    }

    fn predict(&self, user: u32, item: u32) -> f64 {
        self.0.predict(user, item)
    }

    fn rmse(&self, test: &PyLog) -> PyResult<f64> {
        recsys::rmse(&self.0, &test.0).map_err(err)
    }

    /// Top-`n` unseen items per user of `log`, as `{user: [(item, score)]}`.
    #[pyo3(signature = (log, n = 10))]
    fn recommend(&self, log: &PyLog, n: usize) -> HashMap<u32, Vec<(u32, f64)>> {
        recsys::recommend_top_n(&self.0, &log.0, n)
            .iter()
            .map(|(u, recs)| (u, recs.iter().map(|r| (r.item, r.score)).collect()))
            .collect()
    }
}

/// Runs the feedback loop and returns one dict per metric record.
#[pyfunction]
#[pyo3(signature = (log, groups, algorithm, iterations = 10, top_n = 10, seed = 0, dataset = "movielens", **overrides))]
#[allow(clippy::too_many_arguments)]
fn run_feedback_loop<'py>(
    py: Python<'py>,
    log: &PyLog,
    groups: &PyGroups,
    algorithm: &str,
    iterations: usize,
    top_n: usize,
    seed: u64,
    dataset: &str,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = SimulationConfig::new(hyperparams(algorithm, dataset, overrides)?);
    config.dataset = dataset.to_owned();
    config.iterations = iterations;
    config.top_n = top_n;
    config.seed = seed;
    let series = py
        .detach(|| simulator::run_feedback_loop(&log.0, &groups.0, &config))
        .map_err(err)?;
    series
        .records()
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("iteration", r.iteration)?;
            d.set_item("algorithm", &r.algorithm)?;
            d.set_item("dataset", &r.dataset)?;
            d.set_item("metric", r.metric.as_str())?;
            d.set_item("group", r.group.to_string())?;
            d.set_item("value", r.value)?;
            Ok(d)
        })
        .collect()
}

/// The worked between-group GAP scenarios at profile GAP `gap_p`.
#[pyfunction]
#[pyo3(signature = (gap_p = 0.4))]
fn scenario_table(py: Python<'_>, gap_p: f64) -> PyResult<Vec<Bound<'_, PyDict>>> {
    report::scenario_table(gap_p)
        .map_err(err)?
        .into_iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("scenario", row.scenario)?;
            d.set_item("computed", row.computed.to_vec())?;
            d.set_item("published", row.published.to_vec())?;
            d.set_item("status", row.status.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn popbias(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLog>()?;
    m.add_class::<PyGroups>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(load_movielens, m)?)?;
    m.add_function(wrap_pyfunction!(gini, m)?)?;
    m.add_function(wrap_pyfunction!(popularity, m)?)?;
    m.add_function(wrap_pyfunction!(within_group_gini, m)?)?;
    m.add_function(wrap_pyfunction!(delta_gap, m)?)?;
    m.add_function(wrap_pyfunction!(delta_gap_revised, m)?)?;
    m.add_function(wrap_pyfunction!(between_group_gap, m)?)?;
    m.add_function(wrap_pyfunction!(run_feedback_loop, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_table, m)?)?;
    Ok(())
}
