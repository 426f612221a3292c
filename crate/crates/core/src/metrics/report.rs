use std::fmt;

/// Which comprehensiveness/sufficiency definition a report carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Discrete,
    Continuous,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Discrete => "discrete",
            Variant::Continuous => "continuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub label: String,
    pub seed: u64,
    pub accuracy: f64,
    pub ridge_accuracy: f64,
    pub iies: f64,
    pub comp: f64,
    pub suff: f64,
    pub variant: Variant,
    pub b: Vec<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "label,seed,accuracy,ridge_accuracy,iies,comp,suff,variant,b";

    pub fn csv_row(&self) -> String {
        let b: Vec<String> = self.b.iter().map(|q| q.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.label,
            self.seed,
            self.accuracy,
            self.ridge_accuracy,
            self.iies,
            self.comp,
            self.suff,
            self.variant,
            b.join(";")
        )
    }
}
