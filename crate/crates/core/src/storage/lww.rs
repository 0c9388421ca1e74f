//! Last-writer-wins resolution between clusters.
//!
//! A record's winning version is the highest-stamped PUT or DELETE. Every
//! partition and every `(label, target)` relation is a register holding the
//! highest-stamped write seen so far; only writes stamped after the winning
//! version count. Writes arriving while the winner is a tombstone are kept as
//! shadow registers so that the result never depends on arrival order.

use crate::model::{MetadataPartition, ObjectRecord, RelationStamp, RelationTag, ShadowRegister, Stamp};

#[derive(Clone, Debug, PartialEq)]
pub enum Register {
    Partition { name: String, value: Option<MetadataPartition> },
    Relation(RelationTag),
}

impl Register {
    fn same_key(&self, shadow: &ShadowRegister) -> bool {
        match (self, shadow) {
            (Register::Partition { name, .. }, ShadowRegister::Partition { name: n, .. }) => name == n,
            (Register::Relation(t), ShadowRegister::Relation { tag, .. }) => t.key() == tag.key(),
            _ => false,
        }
    }
}

fn shadow_stamp(s: &ShadowRegister) -> Stamp {
    match s {
        ShadowRegister::Partition { stamp, .. } | ShadowRegister::Relation { stamp, .. } => *stamp,
    }
}

fn shadow_sort_key(s: &ShadowRegister) -> (u8, String, String) {
    match s {
        ShadowRegister::Partition { name, .. } => (0, name.clone(), String::new()),
        ShadowRegister::Relation { tag, .. } => (1, tag.label.clone(), tag.target.to_string()),
    }
}

/// Current stamp of the register `reg` addresses, if it has been written.
fn register_stamp(rec: &ObjectRecord, reg: &Register) -> Option<Stamp> {
    match reg {
        Register::Partition { name, .. } => rec
            .geo
            .partitions
            .get(name)
            .or_else(|| rec.geo.removed.get(name))
            .copied()
            .or_else(|| rec.partitions.contains_key(name).then_some(rec.geo.version)),
        Register::Relation(tag) => rec
            .geo
            .relations
            .iter()
            .find(|r| r.label == tag.label && r.target == tag.target)
            .map(|r| r.stamp),
    }
}

/// Apply a register write. Returns whether the record changed.
pub fn apply_register(rec: &mut ObjectRecord, stamp: Stamp, reg: Register) -> bool {
    if stamp <= rec.geo.version {
        return false;
    }
    if rec.is_tombstone() {
        if let Some(existing) = rec.geo.shadow.iter().position(|s| reg.same_key(s)) {
            if shadow_stamp(&rec.geo.shadow[existing]) >= stamp {
                return false;
            }
            rec.geo.shadow.remove(existing);
        }
        rec.geo.shadow.push(match reg {
            Register::Partition { name, value } => ShadowRegister::Partition { stamp, name, partition: value },
            Register::Relation(tag) => ShadowRegister::Relation { stamp, tag },
        });
        rec.geo.shadow.sort_by_key(shadow_sort_key);
        return true;
    }
    if register_stamp(rec, &reg).is_some_and(|cur| cur >= stamp) {
        return false;
    }
    match reg {
        Register::Partition { name, value: Some(p) } => {
            rec.geo.removed.remove(&name);
            rec.geo.partitions.insert(name.clone(), stamp);
            rec.partitions.insert(name, p);
        }
        Register::Partition { name, value: None } => {
            rec.geo.partitions.remove(&name);
            rec.geo.removed.insert(name.clone(), stamp);
            rec.partitions.remove(&name);
        }
        Register::Relation(tag) => {
            rec.geo.relations.retain(|r| !(r.label == tag.label && r.target == tag.target));
            rec.geo.relations.push(RelationStamp { label: tag.label.clone(), target: tag.target.clone(), stamp });
            rec.geo.relations.sort_by(|a, b| (&a.label, &a.target).cmp(&(&b.label, &b.target)));
            rec.relations.retain(|r| r.key() != tag.key());
            rec.relations.push(tag);
            rec.relations.sort_by(|a, b| a.key().cmp(&b.key()));
        }
    }
    true
}

/// Every register held by `rec`, with its stamp.
pub fn registers(rec: &ObjectRecord) -> Vec<(Stamp, Register)> {
    let mut out = Vec::new();
    for (name, p) in &rec.partitions {
        let s = rec.geo.partitions.get(name).copied().unwrap_or(rec.geo.version);
        out.push((s, Register::Partition { name: name.clone(), value: Some(p.clone()) }));
    }
    for (name, s) in &rec.geo.removed {
        out.push((*s, Register::Partition { name: name.clone(), value: None }));
    }
    for tag in &rec.relations {
        let s = register_stamp(rec, &Register::Relation(tag.clone())).unwrap_or(rec.geo.version);
        out.push((s, Register::Relation(tag.clone())));
    }
    for sh in &rec.geo.shadow {
        match sh {
            ShadowRegister::Partition { stamp, name, partition } => {
                out.push((*stamp, Register::Partition { name: name.clone(), value: partition.clone() }))
            }
            ShadowRegister::Relation { stamp, tag } => out.push((*stamp, Register::Relation(tag.clone()))),
        }
    }
    out
}

/// Resolve a candidate new version against the current latest record.
///
/// Returns `None` when the candidate loses. Otherwise returns the candidate
/// with every register of `current` stamped after it carried over.
pub fn supersede(current: Option<&ObjectRecord>, mut candidate: ObjectRecord) -> Option<ObjectRecord> {
    let Some(cur) = current else {
        return Some(candidate);
    };
    if candidate.geo.version <= cur.geo.version {
        return None;
    }
    for (s, reg) in registers(cur) {
        if s > candidate.geo.version {
            apply_register(&mut candidate, s, reg);
        }
    }
    Some(candidate)
}
