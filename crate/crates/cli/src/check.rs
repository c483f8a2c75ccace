use std::fmt;

use anyhow::bail;
use evac_core::busevac::{solve_ebpd, EbpdOptions};
use evac_core::cover::{solve_accp, CoverOptions};
use evac_core::dispatch::{solve_group_dispatch, DispatchOptions};
use evac_core::oracle::{accp_brute, dispatch_brute, ebpd_brute};
use evac_core::sim::scenario::SolverSettings;
use evac_core::sim::PlanningInputs;

use crate::Module;

pub struct Comparison {
    pub module: &'static str,
    pub solver: String,
    pub oracle: String,
    pub pass: bool,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "module  {}", self.module)?;
        writeln!(f, "solver  {}", self.solver)?;
        writeln!(f, "oracle  {}", self.oracle)?;
        write!(f, "{}", if self.pass { "pass" } else { "fail" })
    }
}

/// Re-solves the instance the run handed to `module` and checks it against
/// exhaustive enumeration. Instances beyond the exhaustive bounds are refused.
pub fn compare(
    module: Module,
    inputs: &PlanningInputs,
    settings: &SolverSettings,
) -> anyhow::Result<Comparison> {
    match module {
        Module::Cover => {
            let Some(case) = &inputs.cover else {
                bail!("the scenario never plans hospital coverage");
            };
            let inst = &case.instance;
            if !inst.within_exact_bounds() {
                bail!(
                    "instance too large for the oracle: {} hospitals, {} communities",
                    inst.hospitals.len(),
                    inst.communities.len()
                );
            }
            let opts = CoverOptions {
                mode: settings.mode,
                evo: settings.evo.clone(),
            };
            let a = solve_accp(&case.network, inst, case.instant, &opts)?;
            let got = (a.covered_population, a.total_response_time);
            let want = accp_brute(&case.network, inst, case.instant);
            Ok(Comparison {
                module: "cover",
                solver: format!("covered {} response {}", got.0, got.1),
                oracle: format!("covered {} response {}", want.0, want.1),
                pass: got == want,
            })
        }
        Module::Dispatch => {
            let Some(case) = &inputs.dispatch else {
                bail!("the scenario never dispatches a group of ambulances");
            };
            let inst = &case.instance;
            if !inst.within_exact_bounds() {
                bail!(
                    "instance too large for the oracle: {} ambulances, {} patients",
                    inst.ambulances().len(),
                    inst.patients.len()
                );
            }
            let opts = DispatchOptions {
                mode: settings.mode,
                evo: settings.evo.clone(),
                service: settings.service,
                delivery: settings.delivery,
            };
            let p = solve_group_dispatch(&case.network, inst, &opts)?;
            let got = (p.objective, p.total_wait);
            let want = dispatch_brute(&case.network, inst, &settings.service, settings.delivery);
            Ok(Comparison {
                module: "dispatch",
                solver: format!("max wait {} total wait {}", got.0, got.1),
                oracle: match want {
                    Some(w) => format!("max wait {} total wait {}", w.0, w.1),
                    None => "no feasible schedule".into(),
                },
                pass: want == Some(got),
            })
        }
        Module::Busevac => {
            let Some(case) = &inputs.evacuation else {
                bail!("the scenario never plans a bus evacuation");
            };
            let inst = &case.instance;
            if !inst.within_exact_bounds() {
                bail!(
                    "instance too large for the oracle: {} buses, {} pickups, {} shelters",
                    inst.bus_count(),
                    inst.pickups.len(),
                    inst.shelters.len()
                );
            }
            let opts = EbpdOptions {
                mode: settings.mode,
                evo: settings.evo.clone(),
                boarding: settings.boarding,
            };
            let p = solve_ebpd(&case.network, inst, &opts)?;
            let got = p.objective();
            let want = ebpd_brute(&case.network, inst, &settings.boarding);
            Ok(Comparison {
                module: "busevac",
                solver: format!("evacuated {} completion {}", got.0, got.1),
                oracle: format!("evacuated {} completion {}", want.0, want.1),
                pass: got == want,
            })
        }
    }
}
