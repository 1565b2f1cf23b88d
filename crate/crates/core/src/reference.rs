//! Published reference values for the single-queue and cluster tables.

/// Column order of the single-queue tables.
pub const SINGLE_COLUMNS: [&str; 7] = [
    "fifo",
    "threshold-nonpreempt",
    "threshold-preempt",
    "srpt",
    "prediction-nonpreempt",
    "prediction-preempt",
    "sprpt",
];

pub const LAMBDAS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98];

/// Exponential service, exponential predictions. Rows follow [`LAMBDAS`],
/// columns follow [`SINGLE_COLUMNS`].
pub const EXPONENTIAL: [[f64; 7]; 7] = [
    [2.000, 1.783, 1.564, 1.425, 1.850, 1.698, 1.659],
    [2.500, 2.089, 1.814, 1.604, 2.209, 2.013, 1.940],
    [3.333, 2.542, 2.203, 1.875, 2.761, 2.517, 2.369],
    [5.000, 3.329, 2.910, 2.355, 3.757, 3.451, 3.143],
    [10.00, 5.278, 4.755, 3.552, 6.366, 5.960, 5.097],
    [20.00, 8.535, 7.914, 5.532, 10.848, 10.372, 8.424],
    [50.00, 16.495, 15.735, 10.436, 22.418, 21.909, 16.696],
];

/// Weibull service `F(x) = 1 - exp(-sqrt(2x))`, exponential predictions.
pub const WEIBULL: [[f64; 7]; 7] = [
    [4.000, 3.012, 1.608, 1.411, 3.155, 1.736, 1.940],
    [5.500, 3.676, 1.867, 1.574, 3.918, 2.062, 2.280],
    [8.000, 4.565, 2.258, 1.813, 4.983, 2.568, 2.750],
    [13.00, 5.955, 2.951, 2.217, 6.721, 3.481, 3.519],
    [29.00, 8.940, 4.649, 3.154, 10.630, 5.790, 5.224],
    [58.00, 13.223, 7.448, 4.517, 16.546, 9.846, 7.788],
    [148.0, 22.451, 15.194, 7.666, 29.346, 20.918, 13.404],
];

pub fn single_value(weibull: bool, lambda: f64, column: &str) -> Option<f64> {
    let row = LAMBDAS.iter().position(|&l| (l - lambda).abs() < 1e-12)?;
    let col = SINGLE_COLUMNS.iter().position(|&c| c == column)?;
    Some(if weibull { WEIBULL[row][col] } else { EXPONENTIAL[row][col] })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterRow {
    OneChoice,
    LeastLoadedSrpt,
    ShorterQueueFifo,
    Predicted { q1: f64, q2: f64 },
}

impl ClusterRow {
    pub fn id(&self) -> String {
        match self {
            ClusterRow::OneChoice => "1-choice".into(),
            ClusterRow::LeastLoadedSrpt => "srpt".into(),
            ClusterRow::ShorterQueueFifo => "shorter-queue-fifo".into(),
            ClusterRow::Predicted { q1, q2 } => format!("pred-{q1}-{q2}"),
        }
    }
}

/// `(row, simulation, mean-field)` for 1000 queues with two choices.
pub const CLUSTER: [(ClusterRow, f64, Option<f64>); 12] = [
    (ClusterRow::OneChoice, 24.208, None),
    (ClusterRow::LeastLoadedSrpt, 2.366, None),
    (ClusterRow::ShorterQueueFifo, 4.967, None),
    (ClusterRow::Predicted { q1: 0.0, q2: 0.0 }, 3.394, Some(3.392)),
    (ClusterRow::Predicted { q1: 0.1, q2: 0.1 }, 3.690, Some(3.688)),
    (ClusterRow::Predicted { q1: 0.2, q2: 0.2 }, 4.010, Some(4.007)),
    (ClusterRow::Predicted { q1: 0.3, q2: 0.3 }, 4.353, Some(4.347)),
    (ClusterRow::Predicted { q1: 0.4, q2: 0.4 }, 4.717, Some(4.711)),
    (ClusterRow::Predicted { q1: 0.5, q2: 0.5 }, 5.105, Some(5.098)),
    (ClusterRow::Predicted { q1: 0.2, q2: 0.4 }, 4.280, Some(4.276)),
    (ClusterRow::Predicted { q1: 0.4, q2: 0.2 }, 4.402, Some(4.395)),
    (ClusterRow::Predicted { q1: 0.11, q2: 0.61 }, 4.617, Some(4.611)),
];
