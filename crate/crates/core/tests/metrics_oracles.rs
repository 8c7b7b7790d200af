mod common;

use common::*;
use efcart::metrics::{
    alpha_regression, apply_fees, classification_report, equity_curve, max_drawdown,
    portfolio_metrics,
};
use efcart::stats::two_sided_t_pvalue;
use proptest::prelude::*;

proptest! {
    #[test]
    fn portfolio_metrics_match_direct_formulas(
        logr in prop::collection::vec(-0.2f64..0.2, 12..120),
        rf in 0.0f64..0.005,
    ) {
        let rfs = vec![rf; logr.len()];
        let m = portfolio_metrics(&logr, &rfs).unwrap();
        prop_assert!((m.sharpe - oracles::annual_sharpe(&logr, &rfs)).abs() <= 1e-9 * (1.0 + m.sharpe.abs()));
        prop_assert!((m.max_drawdown - oracles::drawdown(&logr)).abs() < 1e-12);
        let mean = logr.iter().sum::<f64>() / logr.len() as f64;
        prop_assert!((m.annual_return - ((12.0 * mean).exp() - 1.0)).abs() < 1e-12);
        let eq = equity_curve(&logr);
        let total: f64 = logr.iter().sum();
        prop_assert!((eq.last().unwrap() - total.exp()).abs() < 1e-10 * total.exp());
        prop_assert!(m.max_drawdown <= 0.0 && m.max_drawdown > -1.0);
    }

    #[test]
    fn classification_matches_confusion_counts(
        pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200),
    ) {
        let (f, o): (Vec<bool>, Vec<bool>) = pairs.iter().cloned().unzip();
        let r = classification_report(&f, &o).unwrap();
        let count = |a: bool, b: bool| pairs.iter().filter(|p| p.0 == a && p.1 == b).count();
        let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
        prop_assert_eq!((r.true_positive, r.false_positive, r.false_negative, r.true_negative), (tp, fp, fn_, tn));
        prop_assert!((r.accuracy - (tp + tn) as f64 / pairs.len() as f64).abs() < 1e-15);
        if 2 * tp + fp + fn_ > 0 && tp > 0 {
            prop_assert!((r.f1.unwrap() - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-12);
        }
        prop_assert_eq!(r.precision.is_some(), tp + fp > 0);
        prop_assert_eq!(r.npv.is_some(), tn + fn_ > 0);
    }

    #[test]
    fn fees_are_rate_times_l1_turnover(
        prev in prop::collection::vec(-1.0f64..1.0, 1..10),
        delta in prop::collection::vec(-0.5f64..0.5, 10),
        rate in 0.0f64..0.05,
    ) {
        let new: Vec<f64> = prev.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let l1: f64 = delta[..prev.len()].iter().map(|d| d.abs()).sum();
        let fee = apply_fees(&prev, &new, rate).unwrap();
        prop_assert!((fee - rate * l1).abs() < 1e-12);
        prop_assert_eq!(apply_fees(&new, &new, rate).unwrap(), 0.0);
    }
}

#[test]
fn drawdown_examples() {
    assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]), 0.0);
    assert!((max_drawdown(&[1.0, 2.0, 1.0, 1.5, 0.5]) + 0.75).abs() < 1e-15);
}

#[test]
fn short_or_flat_series_are_rejected() {
    assert!(portfolio_metrics(&[0.01; 11], &[0.0; 11]).is_err());
    assert!(portfolio_metrics(&[0.01; 24], &[0.001; 24]).is_err());
}

#[test]
fn alpha_regression_matches_normal_equations() {
    let (s, b, rf) = oracles::planted_alpha(61, 180, 0.005);
    let a = alpha_regression(&s, &b, &rf).unwrap();
    let ys: Vec<f64> = s.iter().zip(&rf).map(|(v, f)| v - f).collect();
    let xs: Vec<f64> = b.iter().zip(&rf).map(|(v, f)| v - f).collect();
    let (intercept, slope, se) = oracles::ols(&xs, &ys);
    assert!((a.alpha_monthly - intercept).abs() < 1e-12);
    assert!((a.alpha - 12.0 * intercept).abs() < 1e-12);
    assert!((a.beta - slope).abs() < 1e-10);
    assert!(rel_close(a.alpha_se, se, 1e-9));
    assert!((a.p_value - two_sided_t_pvalue(intercept / se, 178.0)).abs() < 1e-12);
}

#[test]
fn t_pvalues_match_reference_values() {
    // reference values from an independent statistics package
    for (t, df, p) in [
        (2.0, 10.0, 0.07338803477074039),
        (1.3, 178.0, 0.19528184159416576),
        (-3.1, 30.0, 0.004184484860550749),
    ] {
        assert!(
            (two_sided_t_pvalue(t, df) - p).abs() < 1e-9,
            "t {t} df {df}"
        );
    }
}

#[test]
fn planted_alpha_is_recovered_within_two_standard_errors() {
    let (s, b, rf) = oracles::planted_alpha(62, 180, 0.005);
    let a = alpha_regression(&s, &b, &rf).unwrap();
    assert!((a.alpha_monthly - 0.005).abs() <= 2.0 * a.alpha_se, "{a:?}");
    assert!(a.p_value < 0.05);
    let covered = (0..200)
        .filter(|seed| {
            let (s, b, rf) = oracles::planted_alpha(1000 + seed, 180, 0.005);
            let a = alpha_regression(&s, &b, &rf).unwrap();
            (a.alpha_monthly - 0.005).abs() <= 2.0 * a.alpha_se
        })
        .count();
    // nominal coverage of ±2 SE is about 95%
    assert!(covered >= 180, "coverage {covered}/200");
}

#[test]
fn exact_fit_reports_no_alpha() {
    let (_, b, rf) = oracles::planted_alpha(63, 36, 0.0);
    let s: Vec<f64> = b.iter().zip(&rf).map(|(v, f)| f + 1.2 * (v - f)).collect();
    let a = alpha_regression(&s, &b, &rf).unwrap();
    assert!(a.alpha_monthly.abs() < 1e-14);
    assert!((a.beta - 1.2).abs() < 1e-12);
    assert_eq!(a.p_value, 1.0);
}
