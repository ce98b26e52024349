use super::NetId;

/// Unit-delay level analysis: every gate costs one level, primary inputs are level 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicDepths {
    /// Level of each net (longest gate count from any primary input).
    pub net_depth: Vec<u32>,
    /// Longest gate count from each net forward to any primary output.
    pub net_height: Vec<u32>,
    /// Maximum depth over primary outputs.
    pub critical_path: u32,
}

impl LogicDepths {
    pub(crate) fn compute<'a>(
        net_count: usize,
        order: &[usize],
        cell: impl Fn(usize) -> (NetId, &'a [NetId]),
        outputs: &[NetId],
    ) -> Self {
        let mut depth = vec![0u32; net_count];
        for &c in order {
            let (out, ins) = cell(c);
            depth[out.index()] = 1 + ins.iter().map(|i| depth[i.index()]).max().unwrap_or(0);
        }
        let critical_path = outputs.iter().map(|o| depth[o.index()]).max().unwrap_or(0);
        let mut height = vec![0u32; net_count];
        for &c in order.iter().rev() {
            let (out, ins) = cell(c);
            let h = height[out.index()] + 1;
            for i in ins {
                height[i.index()] = height[i.index()].max(h);
            }
        }
        LogicDepths {
            net_depth: depth,
            net_height: height,
            critical_path,
        }
    }

    pub fn depth(&self, net: NetId) -> u32 {
        self.net_depth[net.index()]
    }

    /// `critical_path - depth(net)`: the level budget left after this net.
    pub fn depth_slack(&self, net: NetId) -> u32 {
        self.critical_path.saturating_sub(self.depth(net))
    }

    /// `critical_path` minus the longest input-to-output path through `net`.
    /// Zero exactly when the net lies on a critical path.
    pub fn path_slack(&self, net: NetId) -> u32 {
        self.critical_path
            .saturating_sub(self.depth(net) + self.net_height[net.index()])
    }
}
