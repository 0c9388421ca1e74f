//! Tenants, namespaces, principals and scope-limited authorization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NamespaceId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grant {
    Read,
    Write,
    Annotate,
    Query,
}

impl Grant {
    pub const ALL: [Grant; 4] = [Grant::Read, Grant::Write, Grant::Annotate, Grant::Query];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    SystemAdmin,
    TenantAdmin {
        tenant: String,
    },
    User {
        tenant: String,
        /// namespace → grants
        #[serde(default)]
        grants: BTreeMap<String, BTreeSet<Grant>>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub account: String,
    pub role: Role,
    pub token: String,
}

impl Principal {
    pub fn new(account: impl Into<String>, role: Role, token: impl Into<String>) -> Self {
        Self { account: account.into(), role, token: token.into() }
    }

    pub fn tenant(&self) -> Option<&str> {
        match &self.role {
            Role::SystemAdmin => None,
            Role::TenantAdmin { tenant } | Role::User { tenant, .. } => Some(tenant),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    ReadObject,
    WriteObject,
    Annotate,
    Query,
    ManagePipeline,
    ManageNamespace,
    ManageUsers,
    ManageTenants,
    ClusterOp,
}

impl Action {
    pub const ALL: [Action; 9] = [
        Action::ReadObject,
        Action::WriteObject,
        Action::Annotate,
        Action::Query,
        Action::ManagePipeline,
        Action::ManageNamespace,
        Action::ManageUsers,
        Action::ManageTenants,
        Action::ClusterOp,
    ];

    pub fn grant(self) -> Option<Grant> {
        match self {
            Action::ReadObject => Some(Grant::Read),
            Action::WriteObject => Some(Grant::Write),
            Action::Annotate => Some(Grant::Annotate),
            Action::Query => Some(Grant::Query),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resource {
    Cluster,
    Tenant { tenant: String },
    Namespace { ns: NamespaceId },
}

impl Resource {
    pub fn namespace(ns: &NamespaceId) -> Self {
        Resource::Namespace { ns: ns.clone() }
    }

    pub fn tenant(t: &str) -> Self {
        Resource::Tenant { tenant: t.to_string() }
    }

    fn tenant_id(&self) -> Option<&str> {
        match self {
            Resource::Cluster => None,
            Resource::Tenant { tenant } => Some(tenant),
            Resource::Namespace { ns } => Some(&ns.tenant),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(String),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Allow => f.write_str("allow"),
            Decision::Deny(r) => write!(f, "deny: {r}"),
        }
    }
}

/// Deny-by-default authorization.
pub fn authorize(p: &Principal, action: Action, resource: &Resource) -> Decision {
    match &p.role {
        Role::SystemAdmin => match action {
            Action::ClusterOp | Action::ManageTenants => Decision::Allow,
            _ => Decision::Deny("system administrators hold no namespace or data rights".into()),
        },
        Role::TenantAdmin { tenant } => {
            if resource.tenant_id() != Some(tenant.as_str()) {
                return Decision::Deny(format!("{} administers tenant {tenant} only", p.account));
            }
            match action {
                Action::ClusterOp | Action::ManageTenants => Decision::Deny("requires system administrator".into()),
                _ => Decision::Allow,
            }
        }
        Role::User { tenant, grants } => {
            let Resource::Namespace { ns } = resource else {
                return Decision::Deny("users act on namespaces only".into());
            };
            if &ns.tenant != tenant {
                return Decision::Deny(format!("{} belongs to tenant {tenant}", p.account));
            }
            let Some(needed) = action.grant() else {
                return Decision::Deny(format!("{action:?} requires an administrator"));
            };
            if grants.get(&ns.namespace).is_some_and(|g| g.contains(&needed)) {
                Decision::Allow
            } else {
                Decision::Deny(format!("{} lacks {needed:?} on {ns}", p.account))
            }
        }
    }
}

pub fn require(p: &Principal, action: Action, resource: &Resource) -> Result<()> {
    match authorize(p, action, resource) {
        Decision::Allow => Ok(()),
        Decision::Deny(reason) => Err(Error::Unauthorized(reason)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tenant {
    pub id: String,
    pub admins: Vec<String>,
    pub namespaces: Vec<String>,
}

fn default_true() -> bool {
    true
}

fn default_max_partitions() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamespaceConfig {
    pub tenant: String,
    pub namespace: String,
    #[serde(default = "default_true")]
    pub versioning: bool,
    #[serde(default = "default_max_partitions")]
    pub max_partitions: usize,
    /// Pipeline id; the latest published version of it is used.
    #[serde(default)]
    pub pipeline: Option<String>,
    /// Maximum number of live objects.
    #[serde(default)]
    pub quota: Option<u64>,
}

impl NamespaceConfig {
    pub fn new(ns: &NamespaceId) -> Self {
        Self {
            tenant: ns.tenant.clone(),
            namespace: ns.namespace.clone(),
            versioning: true,
            max_partitions: default_max_partitions(),
            pipeline: None,
            quota: None,
        }
    }

    pub fn id(&self) -> NamespaceId {
        NamespaceId { tenant: self.tenant.clone(), namespace: self.namespace.clone() }
    }
}

pub const MAX_PARTITIONS_CEILING: usize = 64;

/// Replicated administrative mutations, applied in log order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AdminOp {
    CreateTenant { tenant: String },
    AddPrincipal { principal: Principal },
    CreateNamespace { config: NamespaceConfig },
    Grant { account: String, ns: NamespaceId, grants: BTreeSet<Grant> },
    SetPipeline { ns: NamespaceId, pipeline: Option<String> },
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    tenants: BTreeMap<String, Tenant>,
    namespaces: BTreeMap<NamespaceId, NamespaceConfig>,
    principals: BTreeMap<String, Principal>,
    tokens: BTreeMap<String, String>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn authenticate(&self, token: &str) -> Option<&Principal> {
        self.tokens.get(token).and_then(|a| self.principals.get(a))
    }

    pub fn principal(&self, account: &str) -> Option<&Principal> {
        self.principals.get(account)
    }

    pub fn tenant(&self, id: &str) -> Option<&Tenant> {
        self.tenants.get(id)
    }

    pub fn tenants(&self) -> impl Iterator<Item = &Tenant> {
        self.tenants.values()
    }

    pub fn namespace(&self, ns: &NamespaceId) -> Option<&NamespaceConfig> {
        self.namespaces.get(ns)
    }

    pub fn namespaces(&self) -> impl Iterator<Item = &NamespaceConfig> {
        self.namespaces.values()
    }

    pub fn namespace_or_err(&self, ns: &NamespaceId) -> Result<&NamespaceConfig> {
        self.namespaces.get(ns).ok_or_else(|| Error::UnknownNamespace(ns.to_string()))
    }

    /// Register a principal outside the admin log (bootstrap config file).
    pub fn bootstrap_principal(&mut self, p: Principal) -> Result<()> {
        self.check_principal(&p)?;
        self.insert_principal(p);
        Ok(())
    }

    fn check_principal(&self, p: &Principal) -> Result<()> {
        if p.account.is_empty() || p.token.is_empty() {
            return Err(Error::InvalidConfig("principal needs an account and a token".into()));
        }
        if self.principals.contains_key(&p.account) {
            return Err(Error::DuplicateId(format!("account {}", p.account)));
        }
        if self.tokens.contains_key(&p.token) {
            return Err(Error::DuplicateId("token already in use".into()));
        }
        Ok(())
    }

    fn insert_principal(&mut self, p: Principal) {
        if let Role::TenantAdmin { tenant } = &p.role {
            if let Some(t) = self.tenants.get_mut(tenant) {
                if !t.admins.contains(&p.account) {
                    t.admins.push(p.account.clone());
                }
            }
        }
        self.tokens.insert(p.token.clone(), p.account.clone());
        self.principals.insert(p.account.clone(), p);
    }

    /// Validate `op` as issued by `actor`.
    pub fn check(&self, actor: &Principal, op: &AdminOp, pipeline_exists: &dyn Fn(&str) -> bool) -> Result<()> {
        match op {
            AdminOp::CreateTenant { tenant } => {
                require(actor, Action::ManageTenants, &Resource::Cluster)?;
                NamespaceId::new(tenant, "x")?;
                if self.tenants.contains_key(tenant) {
                    return Err(Error::DuplicateId(format!("tenant {tenant}")));
                }
            }
            AdminOp::AddPrincipal { principal } => {
                match &principal.role {
                    Role::SystemAdmin => require(actor, Action::ClusterOp, &Resource::Cluster)?,
                    Role::TenantAdmin { tenant } => require(actor, Action::ManageTenants, &Resource::tenant(tenant))?,
                    Role::User { tenant, .. } => require(actor, Action::ManageUsers, &Resource::tenant(tenant))?,
                }
                if let Some(t) = principal.tenant() {
                    if !self.tenants.contains_key(t) {
                        return Err(Error::NotFound(format!("tenant {t}")));
                    }
                }
                if let Role::User { tenant, grants } = &principal.role {
                    for ns in grants.keys() {
                        let id = NamespaceId::new(tenant, ns)?;
                        self.namespace_or_err(&id)?;
                    }
                }
                self.check_principal(principal)?;
            }
            AdminOp::CreateNamespace { config } => {
                let id = NamespaceId::new(&config.tenant, &config.namespace)?;
                require(actor, Action::ManageNamespace, &Resource::tenant(&config.tenant))?;
                if !self.tenants.contains_key(&config.tenant) {
                    return Err(Error::NotFound(format!("tenant {}", config.tenant)));
                }
                if self.namespaces.contains_key(&id) {
                    return Err(Error::DuplicateId(format!("namespace {id}")));
                }
                if config.max_partitions == 0 || config.max_partitions > MAX_PARTITIONS_CEILING {
                    return Err(Error::InvalidConfig(format!(
                        "max_partitions must be in 1..={MAX_PARTITIONS_CEILING}"
                    )));
                }
                if config.quota == Some(0) {
                    return Err(Error::InvalidConfig("quota must be positive".into()));
                }
                if let Some(p) = &config.pipeline {
                    if !pipeline_exists(p) {
                        return Err(Error::InvalidConfig(format!("pipeline {p:?} does not exist")));
                    }
                }
            }
            AdminOp::Grant { account, ns, .. } => {
                require(actor, Action::ManageUsers, &Resource::namespace(ns))?;
                self.namespace_or_err(ns)?;
                match self.principals.get(account).map(|p| &p.role) {
                    Some(Role::User { tenant, .. }) if tenant == &ns.tenant => {}
                    Some(_) => return Err(Error::InvalidConfig(format!("{account} is not a user of {}", ns.tenant))),
                    None => return Err(Error::NotFound(format!("account {account}"))),
                }
            }
            AdminOp::SetPipeline { ns, pipeline } => {
                require(actor, Action::ManagePipeline, &Resource::namespace(ns))?;
                self.namespace_or_err(ns)?;
                if let Some(p) = pipeline {
                    if !pipeline_exists(p) {
                        return Err(Error::InvalidConfig(format!("pipeline {p:?} does not exist")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Apply an already validated op.
    pub fn apply(&mut self, op: &AdminOp) {
        match op {
            AdminOp::CreateTenant { tenant } => {
                self.tenants.insert(tenant.clone(), Tenant { id: tenant.clone(), admins: vec![], namespaces: vec![] });
            }
            AdminOp::AddPrincipal { principal } => self.insert_principal(principal.clone()),
            AdminOp::CreateNamespace { config } => {
                if let Some(t) = self.tenants.get_mut(&config.tenant) {
                    t.namespaces.push(config.namespace.clone());
                    t.namespaces.sort();
                }
                self.namespaces.insert(config.id(), config.clone());
            }
            AdminOp::Grant { account, ns, grants } => {
                if let Some(Principal { role: Role::User { grants: g, .. }, .. }) = self.principals.get_mut(account) {
                    g.entry(ns.namespace.clone()).or_default().extend(grants.iter().copied());
                }
            }
            AdminOp::SetPipeline { ns, pipeline } => {
                if let Some(c) = self.namespaces.get_mut(ns) {
                    c.pipeline = pipeline.clone();
                }
            }
        }
    }
}
