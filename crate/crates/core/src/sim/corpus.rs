//! Small fixed corpora shared by tests, the simulator and the gateway suite.

use crate::error::Result;
use crate::model::{MetadataPartition, NamespaceId, ObjectUri};
use crate::pipeline::{DictionaryDoc, PipelineDoc};
use crate::storage::{AdminRecord, BlobSource, Store};
use crate::tenancy::{AdminOp, Principal};

pub const TRAVEL_DICT: &str = r#"{"format_version":1,"id":"travel","extract_rules":[
  {"id":"year","kind":"PATTERN","key":"Year"},
  {"id":"dept","kind":"PATTERN","key":"Department","aliases":["Dept"]},
  {"id":"terr","kind":"PATTERN","key":"Territory"},
  {"id":"status","kind":"PATTERN","key":"Status"}]}"#;

pub const TRAVEL_PIPELINE: &str = r#"{"format_version":1,"id":"travel","stages":[
  {"id":"extract","kind":"EXTRACT","dictionary":"travel","target_partition":"travel"}]}"#;

pub const ITINERARY: &str = "Travel request\n\
Traveller: J. Smith\n\
Department: Sales\n\
Territory: US\n\
Year: 2013\n\
Destination: Boston, MA (3 nights)\n\
Status: Approved\n";

pub const CLAIMS_DICT: &str = r#"{"format_version":1,"id":"claims","extract_rules":[
  {"id":"cid","kind":"PATTERN","key":"CID","aliases":["ClaimID"]}]}"#;

pub const DOCTYPE_DICT: &str = r#"{"format_version":1,"id":"doctype","apply_rules":[
  {"id":"form","selector":{"uri_glob":"*/forms/*"},"emit":[{"key":"doc_type","value":"claim_form"}]},
  {"id":"photo","selector":{"uri_glob":"*/photos/*"},"emit":[{"key":"doc_type","value":"damage_photo"}]},
  {"id":"report","selector":{"uri_glob":"*/reports/*"},"emit":[{"key":"doc_type","value":"appraisal_report"}]}]}"#;

pub const INSURANCE_PIPELINE: &str = r#"{"format_version":1,"id":"insurance","stages":[
  {"id":"cid","kind":"EXTRACT","dictionary":"claims","target_partition":"extracted"},
  {"id":"doctype","kind":"APPLY","dictionary":"doctype","target_partition":"doctype"},
  {"id":"relate","kind":"RELATE","relate":{"join_key":"CID","anchor_selector":"doc_type=claim_form"}}]}"#;

pub const CLAIM_FORM: &str = "First notice of loss\nCID: 1234\nPolicy: P-7781\nInsured: A. Jones\n";
pub const APPRAISAL_REPORT: &str = "Appraisal report for CID=1234. Rear bumper and tail light replaced.\n";

pub const POLICE_REPORT: &str = "Police incident report (scan)\nClaimID: 1234\nOfficer: R. Diaz\n";

/// A few bytes shaped like a JPEG header; contains NULs so it is not text.
pub const PHOTO: &[u8] = &[0xff, 0xd8, 0xff, 0xe0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00];

pub fn dictionary(json: &str) -> DictionaryDoc {
    serde_json::from_str(json).expect("corpus dictionary")
}

pub fn pipeline(json: &str) -> PipelineDoc {
    serde_json::from_str(json).expect("corpus pipeline")
}

/// Publish the insurance definitions and attach the pipeline to `ns`.
pub fn install_insurance(store: &Store, admin: &Principal, ns: &NamespaceId) -> Result<()> {
    store.admin(admin, AdminRecord::PublishDictionary { doc: dictionary(CLAIMS_DICT) })?;
    store.admin(admin, AdminRecord::PublishDictionary { doc: dictionary(DOCTYPE_DICT) })?;
    store.admin(admin, AdminRecord::PublishPipeline { doc: pipeline(INSURANCE_PIPELINE) })?;
    store.admin(
        admin,
        AdminRecord::Tenancy { op: AdminOp::SetPipeline { ns: ns.clone(), pipeline: Some("insurance".into()) } },
    )?;
    Ok(())
}

pub struct InsuranceClaim {
    pub form: ObjectUri,
    pub photo: ObjectUri,
    pub report: ObjectUri,
}

/// Store the claim objects. The photo carries its claim id in a
/// user-supplied partition since it has no text to extract from.
pub fn put_insurance_claim(store: &Store, actor: &Principal, ns: &NamespaceId) -> Result<InsuranceClaim> {
    let c = InsuranceClaim {
        form: ns.uri("forms/1234.txt")?,
        photo: ns.uri("photos/img1.jpg")?,
        report: ns.uri("reports/1234.txt")?,
    };
    store.put_object(actor, &c.photo, &BlobSource::bytes(PHOTO), vec![MetadataPartition::new("claim").with("CID", "1234")])?;
    store.put_object(actor, &c.report, &BlobSource::bytes(APPRAISAL_REPORT.as_bytes()), vec![])?;
    store.put_object(actor, &c.form, &BlobSource::bytes(CLAIM_FORM.as_bytes()), vec![])?;
    Ok(c)
}
