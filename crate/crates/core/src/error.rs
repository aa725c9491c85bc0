use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("atom {index} has invalid measure {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("measure space has no atoms")]
    Empty,
    #[error("budget {budget} outside [0, {total}]")]
    BudgetOutOfRange { budget: f64, total: f64 },
    #[error("{atoms} atoms exceed the exact oracle limit of {limit}")]
    OracleLimit { atoms: usize, limit: usize },
    #[error("selection index {index} is out of range for {atoms} atoms")]
    StaleSelection { index: usize, atoms: usize },
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("structured mesh needs n >= 2, got {0}")]
    TooCoarse(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("triangle {0} is degenerate")]
    DegenerateElement(usize),
    #[error("triangle {0} has negative orientation")]
    InvertedElement(usize),
    #[error("node {0} belongs to no triangle")]
    DanglingNode(usize),
    #[error("triangle {triangle} references node {node} but the mesh has {nodes} nodes")]
    NodeOutOfRange {
        triangle: usize,
        node: usize,
        nodes: usize,
    },
    #[error("mesh has no interior nodes")]
    NoInteriorNodes,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsnError {
    #[error("tau must be positive, got {0}")]
    InvalidTau(f64),
    #[error("threshold {index} is invalid: {value}")]
    InvalidWeight { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("principal subsystem on {size} indices could not be solved")]
    SingularPrincipal { size: usize },
    #[error("proximal gradient did not reach tolerance within {0} iterations")]
    IterationCap(usize),
}

#[derive(Debug, Error)]
pub enum DcError<E: std::error::Error + 'static> {
    #[error("subproblem failed in iteration {iteration}")]
    Subproblem {
        iteration: usize,
        #[source]
        source: E,
    },
    #[error("iteration {iteration}: stationarity residual {residual:e} exceeds allowance {allowance:e}")]
    ResidualBudgetExceeded {
        iteration: usize,
        residual: f64,
        allowance: f64,
    },
    #[error("objective is not finite at the initial point")]
    NonFiniteStart,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("stiffness matrix could not be factorized: {0}")]
    Factorization(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum L0Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Ssn(#[from] SsnError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("DC iteration {iteration} failed: {source}")]
    Dc {
        iteration: usize,
        #[source]
        source: Box<L0Error>,
    },
    #[error("stationarity residual budget exhausted in iteration {0}")]
    ResidualBudget(usize),
    #[error("support budget schedule did not reach K within {0} iterations")]
    ScheduleIncomplete(usize),
}

impl From<DcError<L0Error>> for L0Error {
    fn from(e: DcError<L0Error>) -> Self {
        match e {
            DcError::Subproblem { iteration, source } => L0Error::Dc {
                iteration,
                source: Box::new(source),
            },
            DcError::ResidualBudgetExceeded { iteration, .. } => L0Error::ResidualBudget(iteration),
            DcError::NonFiniteStart => {
                L0Error::InvalidConfig("objective is not finite at the initial point".into())
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparsaError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no convergence within {0} iterations")]
    IterationCap(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
