//! CSV reports.

use std::fmt::Write as _;

use crate::finspace::BinStatistic;
use crate::lnbnn::RankedResult;
use crate::metrics::PrCurve;

pub fn ranked_csv(result: &RankedResult) -> String {
    let mut s = String::from("rank,class,score\n");
    for (i, (c, v)) in result.entries.iter().enumerate() {
        writeln!(s, "{},{},{}", i + 1, c, v).unwrap();
    }
    s
}

pub fn pr_csv(curve: &PrCurve) -> String {
    let mut s = String::from("threshold,precision,recall\n");
    for p in &curve.points {
        writeln!(s, "{},{},{}", p.threshold, p.precision, p.recall).unwrap();
    }
    s
}

pub fn bins_csv(bins: &[BinStatistic]) -> String {
    let mut s = String::from("dtype,spatial_bin,first_partition,last_partition,scale_bin,ap\n");
    for b in bins {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            b.coordinate.dtype.name(),
            b.coordinate.spatial_bin,
            b.interval.0,
            b.interval.1,
            b.coordinate.scale_bin,
            b.ap
        )
        .unwrap();
    }
    s
}
