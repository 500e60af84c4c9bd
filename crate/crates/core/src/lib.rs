//! Telco customer-churn modelling.
//!
//! The crate covers the whole path from the raw customer CSV to a scored
//! model:
//!
//! - [`ingest`] parses and validates the 21-column customer file.
//! - [`pipeline`] encodes, imputes, treats outliers and standardizes into a
//!   19-column matrix, with all statistics fitted on the training rows.
//! - [`nn`] is a from-scratch 19→32→32→32→2 ReLU network trained with Adam.
//! - [`baselines`] holds logistic regression, an SGD linear model, a CART
//!   tree and a random forest behind one [`baselines::Classifier`] trait.
//! - [`metrics`] computes confusion-matrix rates and misclassification cost.
//! - [`eda`] computes segment statistics and histograms in natural units.
//! - [`persist`] reads and writes versioned JSON model files.
//!
//! ```
//! use churn_core::{ingest, pipeline, nn, metrics};
//!
//! let csv = "customerID,gender,SeniorCitizen,Partner,Dependents,tenure,PhoneService,MultipleLines,InternetService,OnlineSecurity,OnlineBackup,DeviceProtection,TechSupport,StreamingTV,StreamingMovies,Contract,PaperlessBilling,PaymentMethod,MonthlyCharges,TotalCharges,Churn
//! A,Female,0,Yes,No,1,No,No phone service,DSL,No,Yes,No,No,No,No,Month-to-month,Yes,Electronic check,29.85,29.85,No
//! B,Male,0,No,No,34,Yes,No,DSL,Yes,No,Yes,No,No,No,One year,No,Mailed check,56.95,1889.5,No
//! C,Male,0,No,No,2,Yes,No,DSL,Yes,Yes,No,No,No,No,Month-to-month,Yes,Mailed check,53.85,108.15,Yes
//! ";
//! let raw = ingest::parse_csv(csv.as_bytes(), "inline")?;
//! let params = pipeline::fit_pipeline(&raw.records)?;
//! let data = pipeline::apply_pipeline(&raw.records, &params);
//!
//! let model = nn::init_params(7);
//! let predicted = nn::predict(&model, &data.features)?;
//! let cm = metrics::confusion(&predicted, &data.labels)?;
//! assert_eq!(cm.total(), 3);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod baselines;
pub mod eda;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod seed;

pub use matrix::Matrix;

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ingest.md")]
    mod ingest {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/exploration.md")]
    mod exploration {}
}
