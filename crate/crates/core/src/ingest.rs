//! Loading and validating the Telco customer CSV.
//!
//! Columns are matched by header name, so re-exported files with a different
//! column order load identically. Every categorical column is parsed into a
//! closed enum; an unknown category is a hard error rather than a silent
//! coercion. A blank `TotalCharges` cell (the public file uses a single
//! space) is kept as `None` so that imputation stays a preprocessing concern.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The 21 canonical column names, in the order of the public file.
pub const COLUMNS: [&str; 21] = [
    "customerID",
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
    "Churn",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse {raw:?}")]
    UnparseableValue {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        raw: String,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("cannot read {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Defines a closed categorical domain with its exact on-disk spellings.
macro_rules! category {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn parse(raw: &str) -> Option<Self> {
                match raw {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

category!(Gender { Male => "Male", Female => "Female" });
category!(YesNo { Yes => "Yes", No => "No" });
category!(
    /// `MultipleLines`.
    PhoneAddOn { Yes => "Yes", No => "No", NoPhoneService => "No phone service" }
);
category!(InternetService { Dsl => "DSL", FiberOptic => "Fiber optic", No => "No" });
category!(
    /// Internet-dependent add-ons such as `OnlineSecurity` or `StreamingTV`.
    InternetAddOn { Yes => "Yes", No => "No", NoInternetService => "No internet service" }
);
category!(Contract {
    MonthToMonth => "Month-to-month",
    OneYear => "One year",
    TwoYear => "Two year",
});
category!(PaymentMethod {
    ElectronicCheck => "Electronic check",
    MailedCheck => "Mailed check",
    BankTransfer => "Bank transfer (automatic)",
    CreditCard => "Credit card (automatic)",
});

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

/// One customer row, values as read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCustomerRecord {
    pub customer_id: String,
    pub gender: Gender,
    pub senior_citizen: bool,
    pub partner: YesNo,
    pub dependents: YesNo,
    pub tenure: u32,
    pub phone_service: YesNo,
    pub multiple_lines: PhoneAddOn,
    pub internet_service: InternetService,
    pub online_security: InternetAddOn,
    pub online_backup: InternetAddOn,
    pub device_protection: InternetAddOn,
    pub tech_support: InternetAddOn,
    pub streaming_tv: InternetAddOn,
    pub streaming_movies: InternetAddOn,
    pub contract: Contract,
    pub paperless_billing: YesNo,
    pub payment_method: PaymentMethod,
    pub monthly_charges: f64,
    pub total_charges: Option<f64>,
    pub churn: YesNo,
}

impl RawCustomerRecord {
    pub fn churned(&self) -> bool {
        self.churn.is_yes()
    }

    /// Cells in canonical column order, formatted so that re-parsing yields
    /// an equal record.
    pub fn to_cells(&self) -> [String; 21] {
        [
            self.customer_id.clone(),
            self.gender.to_string(),
            u8::from(self.senior_citizen).to_string(),
            self.partner.to_string(),
            self.dependents.to_string(),
            self.tenure.to_string(),
            self.phone_service.to_string(),
            self.multiple_lines.to_string(),
            self.internet_service.to_string(),
            self.online_security.to_string(),
            self.online_backup.to_string(),
            self.device_protection.to_string(),
            self.tech_support.to_string(),
            self.streaming_tv.to_string(),
            self.streaming_movies.to_string(),
            self.contract.to_string(),
            self.paperless_billing.to_string(),
            self.payment_method.to_string(),
            self.monthly_charges.to_string(),
            self.total_charges
                .map(|v| v.to_string())
                .unwrap_or_default(),
            self.churn.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub records: Vec<RawCustomerRecord>,
    pub source_path: String,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> RawDataset {
        RawDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            source_path: self.source_path.clone(),
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| u8::from(r.churned())).collect()
    }

    /// Writes the records back out as a canonical CSV with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| IngestError::IoFailure {
            path: "<writer>".into(),
            source: std::io::Error::other(e),
        };
        out.write_record(COLUMNS).map_err(io)?;
        for record in &self.records {
            out.write_record(record.to_cells()).map_err(io)?;
        }
        out.flush().map_err(|e| IngestError::IoFailure {
            path: "<writer>".into(),
            source: e,
        })
    }
}

/// Reads and validates the CSV at `path`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<RawDataset, IngestError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| IngestError::IoFailure {
        path: display.clone(),
        source,
    })?;
    parse_csv(file, &display)
}

/// Parses CSV bytes from any reader. `source` is recorded as the dataset's
/// provenance and used in I/O diagnostics.
pub fn parse_csv<R: Read>(reader: R, source: &str) -> Result<RawDataset, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv.headers().map_err(|e| csv_error(e, source, 0))?.clone();
    let mut index = [0usize; 21];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| csv_error(e, source, row_no))?;
        let cell = |c: usize| row.get(index[c]).unwrap_or("");
        records.push(parse_row(row_no, cell)?);
    }
    Ok(RawDataset {
        records,
        source_path: source.to_string(),
    })
}

fn csv_error(e: csv::Error, source: &str, row: usize) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(err) => IngestError::IoFailure {
            path: source.to_string(),
            source: err,
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => IngestError::Malformed {
            row,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => IngestError::Malformed {
            row,
            message: format!("{other:?}"),
        },
    }
}

fn parse_row<'a>(
    row: usize,
    cell: impl Fn(usize) -> &'a str,
) -> Result<RawCustomerRecord, IngestError> {
    let bad = |c: usize| IngestError::UnparseableValue {
        row,
        column: COLUMNS[c].to_string(),
        raw: cell(c).to_string(),
    };
    macro_rules! cat {
        ($ty:ty, $c:expr) => {
            <$ty>::parse(cell($c)).ok_or_else(|| bad($c))?
        };
    }
    let money = |c: usize| -> Result<f64, IngestError> {
        cell(c)
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| bad(c))
    };

    let customer_id = cell(0).to_string();
    if customer_id.trim().is_empty() {
        return Err(bad(0));
    }
    let senior_citizen = match cell(2).trim() {
        "0" => false,
        "1" => true,
        _ => return Err(bad(2)),
    };
    let tenure = cell(5).trim().parse::<u32>().map_err(|_| bad(5))?;
    let total_charges = if cell(19).trim().is_empty() {
        None
    } else {
        Some(money(19)?)
    };

    Ok(RawCustomerRecord {
        customer_id,
        gender: cat!(Gender, 1),
        senior_citizen,
        partner: cat!(YesNo, 3),
        dependents: cat!(YesNo, 4),
        tenure,
        phone_service: cat!(YesNo, 6),
        multiple_lines: cat!(PhoneAddOn, 7),
        internet_service: cat!(InternetService, 8),
        online_security: cat!(InternetAddOn, 9),
        online_backup: cat!(InternetAddOn, 10),
        device_protection: cat!(InternetAddOn, 11),
        tech_support: cat!(InternetAddOn, 12),
        streaming_tv: cat!(InternetAddOn, 13),
        streaming_movies: cat!(InternetAddOn, 14),
        contract: cat!(Contract, 15),
        paperless_billing: cat!(YesNo, 16),
        payment_method: cat!(PaymentMethod, 17),
        monthly_charges: money(18)?,
        total_charges,
        churn: cat!(YesNo, 20),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub columns: usize,
    /// Missing-cell count per column, in canonical column order.
    pub missing: Vec<(String, usize)>,
    pub churn_fraction: f64,
}

impl DatasetSummary {
    pub fn total_missing(&self) -> usize {
        self.missing.iter().map(|(_, n)| n).sum()
    }
}

pub fn dataset_summary(ds: &RawDataset) -> Result<DatasetSummary, IngestError> {
    if ds.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let churned = ds.records.iter().filter(|r| r.churned()).count();
    let missing_total = ds
        .records
        .iter()
        .filter(|r| r.total_charges.is_none())
        .count();
    let missing = COLUMNS
        .iter()
        .map(|&name| {
            let n = if name == "TotalCharges" {
                missing_total
            } else {
                0
            };
            (name.to_string(), n)
        })
        .collect();
    Ok(DatasetSummary {
        rows: ds.len(),
        columns: COLUMNS.len(),
        missing,
        churn_fraction: churned as f64 / ds.len() as f64,
    })
}
