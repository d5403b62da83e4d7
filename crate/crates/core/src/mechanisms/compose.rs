use crate::autodiff::{Graph, Var};
use crate::error::{contract_err, Result};
use crate::model::Flags;

/// Every loss term of one forward pass. `None` marks an inactive term.
#[derive(Clone, Copy, Debug)]
pub struct LossBundle {
    pub flags: Flags,
    pub task: Var,
    pub pos: Option<Var>,
    pub chunk: Option<Var>,
    pub parse: Option<Var>,
    pub oc: Option<Var>,
    pub adversarial: Option<Var>,
}

impl LossBundle {
    pub fn new(flags: Flags, task: Var) -> Self {
        Self {
            flags,
            task,
            pos: None,
            chunk: None,
            parse: None,
            oc: None,
            adversarial: None,
        }
    }

    /// Active terms in a fixed order.
    pub fn terms(&self) -> Vec<(&'static str, Var)> {
        let mut out = vec![("task", self.task)];
        for (name, v) in [
            ("pos", self.pos),
            ("chunk", self.chunk),
            ("parse", self.parse),
            ("oc", self.oc),
            ("adversarial", self.adversarial),
        ] {
            if let Some(v) = v {
                out.push((name, v));
            }
        }
        out
    }
}

/// Sum of the active terms.
pub fn compose_losses(g: &mut Graph, bundle: &LossBundle) -> Result<Var> {
    let f = bundle.flags;
    let aux = bundle.pos.is_some() || bundle.chunk.is_some() || bundle.parse.is_some();
    if (aux && !f.elh) || (bundle.oc.is_some() && !f.oc) || (bundle.adversarial.is_some() && !f.adversarial) {
        return contract_err("loss term present for an inactive mechanism");
    }
    let mut total = bundle.task;
    for (_, v) in bundle.terms().into_iter().skip(1) {
        total = g.add(total, v)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn term_accounting_follows_flags() {
        let mut g = Graph::new();
        let vals = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125];
        let v: Vec<Var> = vals.iter().map(|&x| g.constant(Tensor::scalar(x))).collect();
        let all = Flags::parse("ABCDE").unwrap();
        let mut b = LossBundle::new(all, v[0]);
        b.pos = Some(v[1]);
        b.chunk = Some(v[2]);
        b.parse = Some(v[3]);
        b.oc = Some(v[4]);
        b.adversarial = Some(v[5]);
        let t = compose_losses(&mut g, &b).unwrap();
        assert_eq!(g.scalar_value(t), vals.iter().sum::<f64>());
        assert_eq!(b.terms().len(), 6);

        let none = LossBundle::new(Flags::default(), v[0]);
        let t = compose_losses(&mut g, &none).unwrap();
        assert_eq!(g.scalar_value(t), 1.0);

        let mut no_e = b;
        no_e.flags.adversarial = false;
        assert!(compose_losses(&mut g, &no_e).is_err());
        no_e.adversarial = None;
        let t = compose_losses(&mut g, &no_e).unwrap();
        assert_eq!(g.scalar_value(t), vals[..5].iter().sum::<f64>());
    }
}
