use std::collections::BTreeMap;

use rdos_core::graph::Direction;
use rdos_core::sim::corpus::{self, install_insurance, put_insurance_claim};
use rdos_core::sim::Fixture;
use rdos_core::storage::{AdminRecord, BlobSource};
use rdos_core::tenancy::AdminOp;

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn travel() -> Result<(), String> {
    let f = Fixture::simple(3, 3, 3);
    let (ns, admin) = f.namespace("acme", "travel");
    f.store.admin(&admin, AdminRecord::PublishDictionary { doc: corpus::dictionary(corpus::TRAVEL_DICT) }).map_err(e)?;
    f.store.admin(&admin, AdminRecord::PublishPipeline { doc: corpus::pipeline(corpus::TRAVEL_PIPELINE) }).map_err(e)?;
    f.store
        .admin(&admin, AdminRecord::Tenancy { op: AdminOp::SetPipeline { ns: ns.clone(), pipeline: Some("travel".into()) } })
        .map_err(e)?;
    let u = ns.uri("trips/2013-04.txt").map_err(e)?;
    f.store.put_object(&admin, &u, &BlobSource::bytes(corpus::ITINERARY.as_bytes()), vec![]).map_err(e)?;
    let got = f.store.get_annotation(&admin, &u, "travel").map_err(e)?.pairs;
    let want: BTreeMap<String, String> =
        [("Year", "2013"), ("Department", "Sales"), ("Territory", "US"), ("Status", "Approved")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
    if got != want {
        return Err(format!("itinerary extracted {got:?}"));
    }
    Ok(())
}

fn insurance() -> Result<(), String> {
    let f = Fixture::simple(3, 3, 3);
    let (ns, admin) = f.namespace("acme", "claims");
    install_insurance(&f.store, &admin, &ns).map_err(e)?;
    let c = put_insurance_claim(&f.store, &admin, &ns).map_err(e)?;
    f.store.backfill(&admin, &ns, None, None, None).map_err(e)?;
    for src in [&c.photo, &c.report] {
        let out = f.store.neighbors(&admin, &ns, src, Direction::Out, None).map_err(e)?;
        let edges: Vec<(&str, &str)> = out.iter().map(|x| (x.label.as_str(), x.to.as_str())).collect();
        if edges != vec![("RelTo", c.form.as_str())] {
            return Err(format!("{src} has edges {edges:?}"));
        }
    }
    let form_out = f.store.neighbors(&admin, &ns, &c.form, Direction::Out, None).map_err(e)?;
    if !form_out.is_empty() {
        return Err(format!("claim form has outgoing edges {form_out:?}"));
    }
    Ok(())
}

pub fn run() -> Result<String, String> {
    travel()?;
    insurance()?;
    Ok("itinerary yields exactly the 4 pairs; photo and report RelTo the claim form".into())
}
