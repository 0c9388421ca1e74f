//! Provisioning helpers: a store with in-memory nodes, a root principal and
//! a tenant admin per tenant.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::cluster::NodeId;
use crate::error::Result;
use crate::model::NamespaceId;
use crate::storage::{AdminRecord, ManualClock, MemDisk, Store, StoreConfig};
use crate::tenancy::{AdminOp, Grant, NamespaceConfig, Principal, Role};

pub const ROOT_TOKEN: &str = "root-token";

pub struct Fixture {
    pub store: Arc<Store>,
    pub clock: Arc<ManualClock>,
    pub root: Principal,
    pub disks: BTreeMap<NodeId, Arc<MemDisk>>,
}

/// Node `i` (1-based) lands in domain `d{(i-1) % domains}`.
pub fn node_layout(nodes: usize, domains: usize) -> Vec<(NodeId, String)> {
    (1..=nodes as u64).map(|i| (NodeId(i), format!("d{}", (i - 1) % domains.max(1) as u64))).collect()
}

impl Fixture {
    pub fn new(cfg: StoreConfig, layout: &[(NodeId, String)]) -> Self {
        let clock = Arc::new(ManualClock::new(1_000));
        let store = Arc::new(Store::new(cfg, clock.clone()));
        let mut disks = BTreeMap::new();
        for (id, dom) in layout {
            let d = Arc::new(MemDisk::new());
            store.add_node(*id, dom, d.clone());
            disks.insert(*id, d);
        }
        let root = Principal::new("root", Role::SystemAdmin, ROOT_TOKEN);
        store.bootstrap_principal(root.clone()).expect("fresh registry");
        Self { store, clock, root, disks }
    }

    pub fn simple(nodes: usize, domains: usize, replicas: usize) -> Self {
        let cfg = StoreConfig { replicas, ..Default::default() };
        Self::new(cfg, &node_layout(nodes, domains))
    }

    /// Tenant admin for `tenant`, creating the tenant on first use.
    pub fn tenant_admin(&self, tenant: &str) -> Principal {
        let account = format!("{tenant}-admin");
        if let Some(p) = self.store.registry().principal(&account) {
            return p.clone();
        }
        self.store
            .admin(&self.root, AdminRecord::Tenancy { op: AdminOp::CreateTenant { tenant: tenant.into() } })
            .expect("create tenant");
        let p = Principal::new(account, Role::TenantAdmin { tenant: tenant.into() }, format!("{tenant}-token"));
        self.store
            .admin(&self.root, AdminRecord::Tenancy { op: AdminOp::AddPrincipal { principal: p.clone() } })
            .expect("add tenant admin");
        p
    }

    /// Create `tenant/namespace`, returning its id and the tenant admin.
    pub fn namespace(&self, tenant: &str, namespace: &str) -> (NamespaceId, Principal) {
        let ns = NamespaceId::new(tenant, namespace).expect("valid names");
        self.namespace_with(NamespaceConfig::new(&ns)).expect("create namespace");
        (ns, self.tenant_admin(tenant))
    }

    pub fn namespace_with(&self, config: NamespaceConfig) -> Result<Principal> {
        let admin = self.tenant_admin(&config.tenant);
        self.store.admin(&admin, AdminRecord::Tenancy { op: AdminOp::CreateNamespace { config } })?;
        Ok(admin)
    }

    /// A user of `ns`'s tenant holding `grants` on `ns`.
    pub fn user(&self, ns: &NamespaceId, account: &str, grants: &[Grant]) -> Principal {
        let admin = self.tenant_admin(&ns.tenant);
        let role = Role::User {
            tenant: ns.tenant.clone(),
            grants: BTreeMap::from([(ns.namespace.clone(), grants.iter().copied().collect::<BTreeSet<_>>())]),
        };
        let p = Principal::new(account, role, format!("{account}-token"));
        self.store
            .admin(&admin, AdminRecord::Tenancy { op: AdminOp::AddPrincipal { principal: p.clone() } })
            .expect("add user");
        p
    }
}
