//! End-to-end stages: spectra, references, indicators, calibration and backtest.

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_panel, calibration_length, CalibrationReport, HorizonConfig};
use crate::error::Result;
use crate::indicators::{compute_spectra, panel_from_spectra, IndicatorPanel, ReferenceConfig, ReferenceSet, RhoScope};
use crate::market_data::Dataset;
use crate::spectra::{Spectrum, WindowSpec};
use crate::strategy::{run_backtest, EquityCurve, StrategyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub spec: WindowSpec,
    pub calibration_length: usize,
    pub references: ReferenceSet,
    pub report: CalibrationReport,
    #[serde(skip)]
    pub panel: Option<IndicatorPanel>,
    #[serde(skip)]
    pub spectra: Vec<[Spectrum; 5]>,
}

impl Calibrated {
    pub fn panel(&self) -> &IndicatorPanel {
        self.panel.as_ref().expect("panel computed during calibration")
    }

    /// Date index of the first trading decision, `K + H`.
    pub fn trading_start(&self) -> usize {
        self.calibration_length + self.report.horizon
    }
}

/// Compute every indicator over the whole dataset and calibrate on `T+1 ..= K`.
pub fn calibrate(
    dataset: &Dataset,
    horizon: HorizonConfig,
    references: &ReferenceConfig,
) -> Result<Calibrated> {
    let spec = WindowSpec::for_assets(dataset.n_assets())?;
    let k = calibration_length(spec.t);
    dataset.check_length(k, horizon.horizon)?;
    let returns = dataset.returns()?;
    let first = spec.first_anchor();
    log::info!(
        "N = {}, T = {}, K = {}, anchors {}..{}",
        spec.n,
        spec.t,
        k,
        first,
        dataset.n_dates()
    );
    let spectra = compute_spectra(dataset, &returns, spec, first..dataset.n_dates())?;
    let rho_panel = match references.rho_scope {
        RhoScope::InSample => returns.slice_dates(1, k + 1),
        RhoScope::FullSample => returns.clone(),
    };
    let refs = ReferenceSet::build(spec, &spectra[..=k - first], &rho_panel, references)?;
    log::info!("mean long-term correlation {:.4}", refs.rho);
    let panel = panel_from_spectra(dataset, &refs, &spectra, first)?;
    let report = calibrate_panel(&panel, &dataset.index_price, spec.t, horizon)?;
    log::info!("{} of {} indicators calibrated", report.calibrated_count(), report.indicators.len());
    Ok(Calibrated {
        spec,
        calibration_length: k,
        references: refs,
        report,
        panel: Some(panel),
        spectra,
    })
}

/// Trade from `K + H` with the calibrated zones.
pub fn backtest(dataset: &Dataset, calibrated: &Calibrated, params: &StrategyParams) -> Result<EquityCurve> {
    run_backtest(
        dataset,
        calibrated.panel(),
        &calibrated.report.zones(),
        params,
        calibrated.trading_start(),
    )
}
