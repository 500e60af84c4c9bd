//! Raw records to model-ready matrix.
//!
//! The stages run in a fixed order: encode, impute `TotalCharges`, replace
//! IQR outliers in the three continuous columns with the training mean, then
//! standardize all 19 columns. Every statistic is fitted on the training
//! partition only and carried in [`PipelineParams`], which serializes to a
//! versioned JSON document with a content fingerprint.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{
    Contract, Gender, InternetAddOn, InternetService, PaymentMethod, PhoneAddOn, RawCustomerRecord,
};
use crate::matrix::Matrix;
use crate::seed::{self, Stream};

pub const NUM_FEATURES: usize = 19;

/// Predictor columns in matrix order.
pub const FEATURES: [&str; NUM_FEATURES] = [
    "gender",
    "SeniorCitizen",
    "Partner",
    "Dependents",
    "tenure",
    "PhoneService",
    "MultipleLines",
    "InternetService",
    "OnlineSecurity",
    "OnlineBackup",
    "DeviceProtection",
    "TechSupport",
    "StreamingTV",
    "StreamingMovies",
    "Contract",
    "PaperlessBilling",
    "PaymentMethod",
    "MonthlyCharges",
    "TotalCharges",
];

pub const TENURE: usize = 4;
pub const CONTRACT: usize = 14;
pub const MONTHLY_CHARGES: usize = 17;
pub const TOTAL_CHARGES: usize = 18;

/// Columns that receive IQR outlier treatment.
pub const CONTINUOUS: [usize; 3] = [TENURE, MONTHLY_CHARGES, TOTAL_CHARGES];

pub const PIPELINE_SCHEMA_VERSION: u32 = 1;

/// Interquartile fence multiplier.
pub const IQR_FENCE: f64 = 1.5;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("record {customer_id}: required field `{field}` is missing")]
    MissingRequiredField {
        customer_id: String,
        field: &'static str,
    },
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("pipeline document rejected: {0}")]
    Schema(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn contract_code(contract: Contract) -> f64 {
    match contract {
        Contract::TwoYear => 2.0,
        Contract::OneYear => 1.0,
        Contract::MonthToMonth => 0.083,
    }
}

pub fn internet_code(service: InternetService) -> f64 {
    match service {
        InternetService::FiberOptic => 2.0,
        InternetService::Dsl => 1.0,
        InternetService::No => 0.0,
    }
}

/// Automatic payment methods map to 1, manual ones to 0.
pub fn payment_code(method: PaymentMethod) -> f64 {
    match method {
        PaymentMethod::BankTransfer | PaymentMethod::CreditCard => 1.0,
        PaymentMethod::ElectronicCheck | PaymentMethod::MailedCheck => 0.0,
    }
}

pub fn gender_code(gender: Gender) -> f64 {
    match gender {
        Gender::Female => 1.0,
        Gender::Male => 0.0,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn internet_add_on(v: InternetAddOn) -> f64 {
    flag(v == InternetAddOn::Yes)
}

/// `contract_code × tenure × monthly`, the fallback for a missing
/// `TotalCharges`.
pub fn impute_total_charges(contract_code: f64, tenure: f64, monthly: f64) -> f64 {
    contract_code * tenure * monthly
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; NUM_FEATURES],
    pub label: u8,
}

fn encode_with(r: &RawCustomerRecord, total_charges: f64) -> FeatureVector {
    let values = [
        gender_code(r.gender),
        flag(r.senior_citizen),
        flag(r.partner.is_yes()),
        flag(r.dependents.is_yes()),
        f64::from(r.tenure),
        flag(r.phone_service.is_yes()),
        flag(r.multiple_lines == PhoneAddOn::Yes),
        internet_code(r.internet_service),
        internet_add_on(r.online_security),
        internet_add_on(r.online_backup),
        internet_add_on(r.device_protection),
        internet_add_on(r.tech_support),
        internet_add_on(r.streaming_tv),
        internet_add_on(r.streaming_movies),
        contract_code(r.contract),
        flag(r.paperless_billing.is_yes()),
        payment_code(r.payment_method),
        r.monthly_charges,
        total_charges,
    ];
    FeatureVector {
        values,
        label: u8::from(r.churned()),
    }
}

/// Applies the fixed encoding tables. Fails only when `TotalCharges` is
/// missing; see [`encode_imputed`] for the total version.
pub fn encode_record(r: &RawCustomerRecord) -> Result<FeatureVector, PipelineError> {
    let total = r
        .total_charges
        .ok_or_else(|| PipelineError::MissingRequiredField {
            customer_id: r.customer_id.clone(),
            field: "TotalCharges",
        })?;
    Ok(encode_with(r, total))
}

/// Encodes `r`, filling a missing `TotalCharges` by [`impute_total_charges`]
/// on the encoded contract value.
pub fn encode_imputed(r: &RawCustomerRecord) -> FeatureVector {
    let total = r.total_charges.unwrap_or_else(|| {
        impute_total_charges(
            contract_code(r.contract),
            f64::from(r.tenure),
            r.monthly_charges,
        )
    });
    encode_with(r, total)
}

/// Linear interpolation between order statistics (R's type 7). `sorted`
/// must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierBounds {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
    /// Mean over all fitted values, outliers included.
    pub mean: f64,
}

impl OutlierBounds {
    pub fn is_outlier(&self, x: f64) -> bool {
        x < self.lower || x > self.upper
    }

    pub fn treat(&self, x: f64) -> f64 {
        if self.is_outlier(x) {
            self.mean
        } else {
            x
        }
    }
}

pub fn fit_outlier_bounds(values: &[f64]) -> Result<OutlierBounds, PipelineError> {
    if values.len() < 2 {
        return Err(PipelineError::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(OutlierBounds {
        q1,
        q3,
        iqr,
        lower: q1 - IQR_FENCE * iqr,
        upper: q3 + IQR_FENCE * iqr,
        mean: values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Replaces every value strictly outside the fences with the stored mean.
pub fn treat_outliers(values: &[f64], bounds: &OutlierBounds) -> Vec<f64> {
    values.iter().map(|&x| bounds.treat(x)).collect()
}

/// Per-column `(x − μ) / σ` with population σ; σ = 0 columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Matrix) -> Standardizer {
        let n = train.rows() as f64;
        let mean: Vec<f64> = train.sum_rows().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; train.cols()];
        for row in train.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
        Standardizer {
            mean,
            std: var.into_iter().map(|v| (v / n).sqrt()).collect(),
        }
    }

    pub fn scale(&self, col: usize, x: f64) -> f64 {
        let sd = self.std[col];
        if sd == 0.0 {
            0.0
        } else {
            (x - self.mean[col]) / sd
        }
    }

    /// Inverse of [`Standardizer::scale`] (σ = 0 columns return μ).
    pub fn unscale(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }

    pub fn apply(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, x) in out.row_mut(r).iter_mut().enumerate() {
                *x = self.scale(c, *x);
            }
        }
        out
    }

    pub fn inverse(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        for r in 0..out.rows() {
            for (c, x) in out.row_mut(r).iter_mut().enumerate() {
                *x = self.unscale(c, *x);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 42,
            stratified: true,
        }
    }
}

/// Row indices of each partition, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `0..labels.len()`. Stratified splits draw `round(n_c · f)` test
/// rows from each class; unstratified ones draw `round(n · f)` overall.
pub fn split_indices(labels: &[u8], spec: &SplitSpec) -> Result<Split, PipelineError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(PipelineError::InvalidSplit(format!(
            "test fraction {} is not in (0, 1)",
            spec.test_fraction
        )));
    }
    let mut rng = seed::rng(spec.seed, Stream::Split);
    let mut test = Vec::new();
    let mut train = Vec::new();
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..2u8)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    for mut group in groups {
        let k = (group.len() as f64 * spec.test_fraction).round() as usize;
        group.shuffle(&mut rng);
        test.extend_from_slice(&group[..k]);
        train.extend_from_slice(&group[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for c in 0..2u8 {
        for (name, part) in [("train", &train), ("test", &test)] {
            if !part.iter().any(|&i| labels[i] == c) {
                return Err(PipelineError::DegenerateSplit(format!(
                    "class {c} is absent from the {name} partition"
                )));
            }
        }
    }
    Ok(Split { train, test })
}

/// Numeric predictors and binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub features: Matrix,
    pub labels: Vec<u8>,
}

impl EncodedDataset {
    pub fn new(features: Matrix, labels: Vec<u8>) -> Self {
        assert_eq!(
            features.rows(),
            labels.len(),
            "features and labels disagree in length"
        );
        EncodedDataset { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&y| y == 1).count() as f64 / self.len() as f64
    }
}

pub fn split_dataset(
    ds: &EncodedDataset,
    spec: &SplitSpec,
) -> Result<(EncodedDataset, EncodedDataset), PipelineError> {
    let split = split_indices(&ds.labels, spec)?;
    Ok((ds.select(&split.train), ds.select(&split.test)))
}

/// The fixed categorical tables, recorded in the params document so a
/// reader can see how each code was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingTables {
    pub gender: Vec<(String, f64)>,
    pub internet_service: Vec<(String, f64)>,
    pub contract: Vec<(String, f64)>,
    pub payment_method: Vec<(String, f64)>,
    pub yes_no: Vec<(String, f64)>,
    pub no_service: f64,
}

impl EncodingTables {
    pub fn builtin() -> Self {
        let table =
            |pairs: Vec<(&str, f64)>| pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        EncodingTables {
            gender: table(
                Gender::ALL
                    .iter()
                    .map(|&g| (g.as_str(), gender_code(g)))
                    .collect(),
            ),
            internet_service: table(
                InternetService::ALL
                    .iter()
                    .map(|&s| (s.as_str(), internet_code(s)))
                    .collect(),
            ),
            contract: table(
                Contract::ALL
                    .iter()
                    .map(|&c| (c.as_str(), contract_code(c)))
                    .collect(),
            ),
            payment_method: table(
                PaymentMethod::ALL
                    .iter()
                    .map(|&p| (p.as_str(), payment_code(p)))
                    .collect(),
            ),
            yes_no: table(vec![("Yes", 1.0), ("No", 0.0)]),
            no_service: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOutliers {
    pub feature: String,
    pub index: usize,
    pub bounds: OutlierBounds,
}

/// Fitted preprocessing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub schema_version: u32,
    pub features: Vec<String>,
    pub encoding: EncodingTables,
    pub outliers: Vec<FeatureOutliers>,
    pub standardizer: Standardizer,
}

impl PipelineParams {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("pipeline params always serialize");
        hex(&Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline params always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let params: PipelineParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != PIPELINE_SCHEMA_VERSION {
            return Err(PipelineError::Schema(format!(
                "schema_version {} (expected {PIPELINE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.features != FEATURES {
            return Err(PipelineError::Schema(
                "feature list differs from the built-in one".into(),
            ));
        }
        if self.encoding != EncodingTables::builtin() {
            return Err(PipelineError::Schema(
                "encoding tables differ from the built-in ones".into(),
            ));
        }
        let s = &self.standardizer;
        if s.mean.len() != NUM_FEATURES || s.std.len() != NUM_FEATURES {
            return Err(PipelineError::Schema(
                "standardizer has the wrong width".into(),
            ));
        }
        if !s.mean.iter().chain(&s.std).all(|x| x.is_finite()) || s.std.iter().any(|&x| x < 0.0) {
            return Err(PipelineError::Schema(
                "standardizer statistics must be finite, σ ≥ 0".into(),
            ));
        }
        for o in &self.outliers {
            if o.index >= NUM_FEATURES || FEATURES[o.index] != o.feature {
                return Err(PipelineError::Schema(format!(
                    "outlier entry `{}` does not name a feature",
                    o.feature
                )));
            }
        }
        Ok(())
    }

    /// Runs encode → impute → outlier treatment → standardization.
    pub fn transform(&self, records: &[RawCustomerRecord]) -> EncodedDataset {
        let (treated, labels) = self.treated_matrix(records);
        EncodedDataset::new(self.standardizer.apply(&treated), labels)
    }

    fn treated_matrix(&self, records: &[RawCustomerRecord]) -> (Matrix, Vec<u8>) {
        let (mut m, labels) = encoded_matrix(records);
        for o in &self.outliers {
            for r in 0..m.rows() {
                let x = m.get(r, o.index);
                m.set(r, o.index, o.bounds.treat(x));
            }
        }
        (m, labels)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encoded_matrix(records: &[RawCustomerRecord]) -> (Matrix, Vec<u8>) {
    let mut data = Vec::with_capacity(records.len() * NUM_FEATURES);
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        let fv = encode_imputed(r);
        data.extend_from_slice(&fv.values);
        labels.push(fv.label);
    }
    (Matrix::from_vec(records.len(), NUM_FEATURES, data), labels)
}

/// Fits all preprocessing statistics on `train`.
pub fn fit_pipeline(train: &[RawCustomerRecord]) -> Result<PipelineParams, PipelineError> {
    let (mut m, _) = encoded_matrix(train);
    let mut outliers = Vec::with_capacity(CONTINUOUS.len());
    for &c in &CONTINUOUS {
        let bounds = fit_outlier_bounds(&m.column(c))?;
        for r in 0..m.rows() {
            let x = m.get(r, c);
            m.set(r, c, bounds.treat(x));
        }
        outliers.push(FeatureOutliers {
            feature: FEATURES[c].to_string(),
            index: c,
            bounds,
        });
    }
    Ok(PipelineParams {
        schema_version: PIPELINE_SCHEMA_VERSION,
        features: FEATURES.iter().map(|s| s.to_string()).collect(),
        encoding: EncodingTables::builtin(),
        outliers,
        standardizer: Standardizer::fit(&m),
    })
}

pub fn apply_pipeline(records: &[RawCustomerRecord], params: &PipelineParams) -> EncodedDataset {
    params.transform(records)
}
