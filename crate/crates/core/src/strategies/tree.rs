use rand::{Rng, RngCore};

use crate::complexity::{RademacherTree, Sign};
use crate::discrete::SignChannel;
use crate::game::{Adversary, DeclaredAction, Environment, StrategyError};

type Signer<E> = fn(&E, &<E as Environment>::LossInstance, f64) -> <E as Environment>::LossInstance;

/// Walks a Rademacher tree: round `t` draws `ε_t` uniformly and emits the
/// node at `ε_{1:t−1}`, multiplied by `ε_t` when a sign channel is attached.
pub struct RademacherTreeAdversary<E: Environment> {
    tree: RademacherTree<E::LossInstance, E::DynInstance>,
    signer: Option<Signer<E>>,
    signs: Vec<Sign>,
}

impl<E: Environment> RademacherTreeAdversary<E> {
    pub fn new(tree: RademacherTree<E::LossInstance, E::DynInstance>) -> Self {
        RademacherTreeAdversary { tree, signer: None, signs: Vec::new() }
    }

    /// Signs drawn so far.
    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }

    pub fn is_signed(&self) -> bool {
        self.signer.is_some()
    }
}

impl<E: SignChannel> RademacherTreeAdversary<E> {
    pub fn with_sign_channel(tree: RademacherTree<E::LossInstance, E::DynInstance>) -> Self {
        RademacherTreeAdversary { tree, signer: Some(E::with_sign), signs: Vec::new() }
    }
}

impl<E: Environment> Adversary<E> for RademacherTreeAdversary<E> {
    fn id(&self) -> String {
        format!("rademacher-tree(depth={},signed={})", self.tree.depth(), self.signer.is_some())
    }

    fn emit(
        &mut self,
        env: &E,
        t: usize,
        _: Option<&DeclaredAction<E::Policy>>,
        rng: &mut dyn RngCore,
    ) -> Result<(E::LossInstance, E::DynInstance), StrategyError> {
        if t > self.tree.depth() {
            return Err(StrategyError::Invalid(format!("tree depth {} < round {t}", self.tree.depth())));
        }
        let (z, zeta) = self.tree.node(&self.signs[..t - 1]).map_err(|e| StrategyError::Invalid(e.to_string()))?;
        let eps: Sign = if rng.gen::<bool>() { 1 } else { -1 };
        self.signs.push(eps);
        let z = match self.signer {
            Some(sign) => sign(env, &z, f64::from(eps)),
            None => z,
        };
        Ok((z, zeta))
    }
}
